"""Least-squares rate fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RateFit:
    x: tuple
    y: tuple
    slope: float
    intercept: float
    r2: float
    log_log: bool

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.log_log:
            return np.exp(self.intercept) * x**self.slope
        return self.intercept + self.slope * x


def fit_rate(points, log_log: bool = True) -> RateFit:
    """Ordinary least squares of ``y`` on ``x`` (both logged when ``log_log``)."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if log_log:
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-log fit needs positive data")
        X, Y = np.log(x), np.log(y)
    else:
        X, Y = x, y
    xc = X - X.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-300 * max(1.0, float(X @ X)):
        raise ValueError("degenerate abscissae")
    slope = float(xc @ (Y - Y.mean()) / sxx)
    intercept = float(Y.mean() - slope * X.mean())
    resid = Y - (intercept + slope * X)
    ss_tot = float(((Y - Y.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    if ss_tot <= 1e-30 * max(1.0, float(Y @ Y)):
        r2 = 1.0 if ss_res <= 1e-30 * max(1.0, float(Y @ Y)) else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(tuple(x), tuple(y), slope, intercept, r2, log_log)
