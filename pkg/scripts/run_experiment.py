"""Run selected experiments (E1..E8) from a config.

    python scripts/run_experiment.py E4 E7 [--config configs/quick.ini] [--threads 4]
"""

import argparse
import sys
from pathlib import Path

from kinlab.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("ids", nargs="+")
    ap.add_argument("--config", default=str(ROOT / "configs" / "default.ini"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    argv = ["run", "--config", args.config, "--threads", str(args.threads), "--only", *args.ids]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(main(argv))
