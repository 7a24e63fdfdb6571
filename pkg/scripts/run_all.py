"""Run every experiment of a config and write CSVs.

    python scripts/run_all.py [--config configs/default.ini] [--out results] [--threads 8]
"""

import argparse
import sys
from pathlib import Path

from kinlab.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "default.ini"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=8)
    args = ap.parse_args()
    argv = ["run", "--config", args.config, "--threads", str(args.threads)]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(main(argv))
