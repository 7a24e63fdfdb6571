"""Run a config serially and with N workers, then compare the CSVs byte for byte."""

import argparse
import filecmp
import sys
import tempfile
from pathlib import Path

from kinlab.harness import load_config, run_and_write

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "quick.ini"))
    ap.add_argument("--threads", type=int, default=8)
    args = ap.parse_args()
    configs = load_config(args.config)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "serial"), Path(tmp, "parallel")
        run_and_write(configs, a, threads=1)
        run_and_write(configs, b, threads=args.threads)
        names = sorted(p.name for p in a.glob("*.csv"))
        _, diff, err = filecmp.cmpfiles(a, b, names, shallow=False)
    print(f"{len(names)} files compared, {len(diff)} differ, {len(err)} missing")
    for n in diff + err:
        print(f"  {n}")
    return 1 if diff or err else 0


if __name__ == "__main__":
    sys.exit(main())
