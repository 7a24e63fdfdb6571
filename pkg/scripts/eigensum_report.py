"""Eigen-sum observability on one grid: kernel count, envelope fit and excesses.

    python scripts/eigensum_report.py --nx 63 --modes 200 --radius 0.25
"""

import argparse

from kinlab.harness.config import ExperimentConfig
from kinlab.harness.experiments import KERNEL_TOL, _e7_eigensum_task, eigen_envelope

import numpy as np

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=31)
    ap.add_argument("--modes", type=int, default=200)
    ap.add_argument("--radius", type=float, default=0.25)
    args = ap.parse_args()
    cfg = ExperimentConfig("E7", nx=(args.nx,), modes=args.modes, radius=args.radius)
    es = _e7_eigensum_task(cfg, args.nx)
    sig = np.asarray(es["sigma_min"])
    mu = np.asarray(es["mu"])
    ok = sig > KERNEL_TOL
    print(f"nx={args.nx} ball nodes={es['ball_nodes']} cutoffs={sig.size} singular={int((~ok).sum())}")
    env = eigen_envelope(mu[ok], 1.0 / sig[ok] ** 2)
    print(f"slope={env.fit.slope:.4f} R2={env.fit.r2:.4f} shift={env.shift:.4f}")
    print(f"upper-half excess={env.excess:.4f} lower-half extrapolation excess={env.extrapolated_excess:.4f}")
