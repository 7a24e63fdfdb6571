"""Command line entry point: ``kinlab run|list|verify``."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import REGISTRY, load_config, run_and_write, verify_summary


def _run(args) -> int:
    configs = load_config(args.config)
    if args.only:
        wanted = set(args.only)
        configs = [c for c in configs if c.experiment in wanted]
    reports, paths = run_and_write(configs, args.out, args.threads)
    for rep in reports:
        for c in rep.checks:
            print(c.line())
        for n in rep.notes:
            print(f"{rep.experiment} note: {n}")
        print(rep.summary_line())
    print(f"wrote {len(paths)} files to {paths[-1].parent}")
    return 0 if all(r.passed for r in reports) else 1


def _list(args) -> int:
    for key, spec in REGISTRY.items():
        print(f"{key}  {spec.title}")
    return 0


def _verify(args) -> int:
    rows = verify_summary(args.csv)
    bad = [r for r in rows if not r.consistent]
    for r in bad:
        print(f"inconsistent: {r.experiment} {r.check_name} stored={r.stored_pass} recomputed={r.recomputed_pass}")
    failed = sum(not r.recomputed_pass for r in rows)
    print(f"{len(rows)} rows, {len(bad)} inconsistent, {failed} failing")
    return 1 if bad else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kinlab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the experiments of a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--only", nargs="*", help="restrict to these experiment ids")
    r.set_defaults(fn=_run)
    sub.add_parser("list", help="list experiments").set_defaults(fn=_list)
    v = sub.add_parser("verify", help="recompute pass/fail of a summary CSV")
    v.add_argument("csv")
    v.set_defaults(fn=_verify)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
