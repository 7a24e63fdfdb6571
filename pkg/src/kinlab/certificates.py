"""Scalar functionals and inequality sides for the observation estimate.

Covers the data-quality ratios, the Gaussian-weighted frequency function,
the ODE comparison lemma used to derive Hoelder-type interpolation, the
localized smallness estimate, and the end-to-end observation inequality
for the kinetic equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from .diffusion import EllipticOperator, HeatRun, h_minus1_norm
from .grid import Ball, KineticState, Rectangle, ScalarField, SpatialGrid, lp_norm, velocity_average

SIMPSON_NODES = 2049


class UndefinedQuantity(ValueError):
    pass


def c_p(p: float) -> float:
    """``((p-1)/(p-2))^((p-1)/2p) * (1/p)^(1/2p)``."""
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    e = 1.0 / (2.0 * p)
    # log form keeps p near 2 and p -> infinity well conditioned
    return math.exp((p - 1) * e * math.log1p(1.0 / (p - 2)) - e * math.log(p))


@dataclass(frozen=True)
class DataQuality:
    m_p: float
    f_freq: float
    p: float


def data_quality(f0: KineticState, op: EllipticOperator, p: float) -> DataQuality:
    """Shape ratio ``||f0||_{L^2p(dx dv)} / ||<f0>||_{L2}`` and frequency ``||<f0>||^2 / ||<f0>||^2_{H^-1}``."""
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    g = velocity_average(f0)
    l2 = lp_norm(g, 2)
    if l2 == 0.0:
        raise UndefinedQuantity("velocity average of the initial data vanishes")
    return DataQuality(lp_norm(f0, 2 * p) / l2, (l2 / h_minus1_norm(op, g)) ** 2, p)


def sigma(dq: DataQuality, T: float, c: float) -> float:
    if not (T > 0 and c > 0):
        raise ValueError("sigma needs T > 0 and c > 0")
    return c * (1.0 + 1.0 / T + T * dq.f_freq)


def gaussian_weight(
    grid: SpatialGrid,
    x0: tuple[float, float],
    lam: float,
    t: float,
    T: float,
    kappa: float = 1.0,
    points: tuple[np.ndarray, np.ndarray] | None = None,
) -> ScalarField | np.ndarray:
    """``(T-t+lam)^(-n/2) exp(-d^2 / (4(T-t+lam)))`` with ``d = |x-x0|/sqrt(kappa)``.

    Evaluated at the grid nodes, or at ``points`` (e.g. face midpoints) when
    given, in which case a raw array is returned.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not 0 <= t <= T:
        raise ValueError(f"need 0 <= t <= T, got t={t}, T={T}")
    X, Y = points if points is not None else grid.mesh()
    s = T - t + lam
    d2 = ((X - x0[0]) ** 2 + (Y - x0[1]) ** 2) / kappa
    G = s ** (-1.0) * np.exp(-d2 / (4.0 * s))  # n = 2
    return G if points is not None else ScalarField(grid, G)


@dataclass
class FrequencyTrace:
    times: np.ndarray
    values: np.ndarray  # N_lambda(t_k)
    masses: np.ndarray  # y(t_k) = int z^2 G
    lam: float
    x0: tuple
    T: float

    def scaled(self) -> np.ndarray:
        """``(T - t + lam) N_lambda(t)``, nonincreasing for the pure heat flow."""
        return (self.T - self.times + self.lam) * self.values

    def monotonicity_violations(self) -> np.ndarray:
        """Per-step increases of the scaled frequency (positive entries are violations)."""
        return np.diff(self.scaled())


def frequency_function(
    op: EllipticOperator,
    run: HeatRun,
    x0: tuple[float, float],
    lam: float,
    kappa: float,
    cutoff: ScalarField | None = None,
    T: float | None = None,
) -> FrequencyTrace:
    """``N(t) = int kappa |grad z|^2 G / int z^2 G`` along a heat run, ``z = u`` or ``cutoff * u``.

    Gradients live on faces with the same differences as the elliptic
    stencil; ``G`` is sampled at face midpoints for the numerator and at
    nodes for the denominator.
    """
    T = run.times[-1] if T is None else T
    (fxX, fxY), (fyX, fyY) = op.face_coordinates()
    grid = op.grid
    vals, masses = [], []
    for t, u in zip(run.times, run.fields):
        z = u if cutoff is None else ScalarField(grid, u.values * cutoff.values)
        Gn = gaussian_weight(grid, x0, lam, t, T, kappa).values
        Gx = gaussian_weight(grid, x0, lam, t, T, kappa, points=(fxX, fxY))
        Gy = gaussian_weight(grid, x0, lam, t, T, kappa, points=(fyX, fyY))
        y = float((z.values**2 * Gn).sum() * grid.cell_volume)
        if not y > 0:
            raise UndefinedQuantity(f"weighted mass vanishes at t={t}")
        vals.append(op.energy(z, Gx, Gy) / y)
        masses.append(y)
    return FrequencyTrace(np.asarray(run.times, float), np.asarray(vals), np.asarray(masses), lam, tuple(x0), T)


def plateau_cutoff(grid: SpatialGrid, region: Ball | Rectangle, inner_fraction: float = 0.5) -> ScalarField:
    """C^2 cutoff equal to 1 on the inner part of ``region`` and 0 outside it.

    The transition is the quintic smoothstep ``1 - (10s^3 - 15s^4 + 6s^5)``,
    whose first two derivatives vanish at both ends.
    """
    X, Y = grid.mesh()

    def profile(s):
        s = np.clip(s, 0.0, 1.0)
        return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)

    if isinstance(region, Ball):
        r = np.hypot(X - region.cx, Y - region.cy)
        r_in = inner_fraction * region.radius
        chi = profile((r - r_in) / (region.radius - r_in))
    else:
        out = 1.0
        for Z, lo, hi in ((X, region.x0, region.x1), (Y, region.y0, region.y1)):
            c, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            h_in = inner_fraction * half
            out = out * profile((np.abs(Z - c) - h_in) / (half - h_in))
        chi = out
    return ScalarField(grid, chi)


# ---------------------------------------------------------------------------
# ODE comparison


def _weight_integral(a: float, b: float, C0: float, C1: float, lam: float, T: float, nodes: int) -> float:
    t = np.linspace(a, b, nodes)
    return float(simpson(np.exp(t * C1) / (T - t + lam) ** (1.0 + C0), x=t))


def comparison_exponent(
    t1: float, t2: float, t3: float, C0: float, C1: float, lam: float, T: float, nodes: int = SIMPSON_NODES
) -> float:
    """Ratio ``M`` of the weight ``e^{C1 t} (T-t+lam)^{-1-C0}`` integrated over ``[t2,t3]`` and ``[t1,t2]``."""
    if nodes < 129 or nodes % 2 == 0:
        raise ValueError("Simpson quadrature needs an odd node count >= 129")
    return _weight_integral(t2, t3, C0, C1, lam, T, nodes) / _weight_integral(t1, t2, C0, C1, lam, T, nodes)


@dataclass
class OdeSystemSample:
    """Sampled ``y, N, F1, F2`` on a time grid, with optional exact derivatives."""

    t: np.ndarray
    y: np.ndarray
    N: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    C0: float
    C1: float
    lam: float
    T: float
    dy: np.ndarray | None = None
    dN: np.ndarray | None = None

    def __post_init__(self):
        for name in ("t", "y", "N", "F1", "F2"):
            setattr(self, name, np.asarray(getattr(self, name), float))
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.C0 < 0 or self.C1 < 0 or not self.lam > 0:
            raise ValueError("need C0, C1 >= 0 and lam > 0")
        if np.any(self.y <= 0) or np.any(self.N <= 0):
            raise ValueError("y and N must be positive")

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        dy = self.dy if self.dy is not None else np.gradient(self.y, self.t, edge_order=2)
        dN = self.dN if self.dN is not None else np.gradient(self.N, self.t, edge_order=2)
        return np.asarray(dy, float), np.asarray(dN, float)

    def hypothesis_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """Excess of each hypothesis over its bound (``<= 0`` where it holds)."""
        dy, dN = self.derivatives()
        s = self.T - self.t + self.lam
        r1 = np.abs(0.5 * dy + self.N * self.y) - ((self.C0 / s + self.C1) * self.y + self.F1 * self.y)
        r2 = dN - (((1.0 + self.C0) / s + self.C1) * self.N + self.F2)
        return r1, r2


@dataclass
class OdeLemmaReport:
    M: float
    D: float
    lhs_log: float
    rhs_log: float
    hypothesis_violations: list = field(default_factory=list)

    @property
    def margin(self) -> float:
        """``log(rhs) - log(lhs)``; nonnegative when the conclusion holds."""
        return self.rhs_log - self.lhs_log

    @property
    def holds(self) -> bool:
        return self.margin >= -1e-12 * max(1.0, abs(self.lhs_log))


def _index_of(t: np.ndarray, s: float) -> int:
    k = int(np.argmin(np.abs(t - s)))
    if not math.isclose(t[k], s, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError(f"time {s} is not a sample point")
    return k


def check_ode_lemma(
    sample: OdeSystemSample, t1: float, t2: float, t3: float, tol: float = 1e-9, nodes: int = SIMPSON_NODES
) -> OdeLemmaReport:
    """Both sides (in logs) of ``y(t2)^{1+M} <= y(t3) y(t1)^M e^{4D} ((T-t1+lam)/(T-t3+lam))^{2C0(1+M)}``."""
    if not 0 <= t1 < t2 < t3 <= sample.T:
        raise ValueError("need 0 <= t1 < t2 < t3 <= T")
    r1, r2 = sample.hypothesis_residuals()
    scale_y = np.maximum(np.abs(sample.y), 1e-300)
    bad = []
    for k in np.flatnonzero(r1 > tol * (1.0 + np.abs(sample.N)) * scale_y):
        bad.append(("y", float(sample.t[k]), float(r1[k])))
    for k in np.flatnonzero(r2 > tol * (1.0 + np.abs(sample.N))):
        bad.append(("N", float(sample.t[k]), float(r2[k])))

    C0, C1, lam, T = sample.C0, sample.C1, sample.lam, sample.T
    M = comparison_exponent(t1, t2, t3, C0, C1, lam, T, nodes)
    i1, i2, i3 = (_index_of(sample.t, s) for s in (t1, t2, t3))
    sl = slice(i1, i3 + 1)
    sup_f1 = float(np.abs(sample.F1[sl]).max())
    int_f2 = float(simpson(np.abs(sample.F2[sl]), x=sample.t[sl])) if i3 - i1 >= 2 else float(
        trapezoid(np.abs(sample.F2[sl]), sample.t[sl])
    )
    D = M * (t2 - t1) * (C1 + sup_f1 + int_f2)
    ly = np.log(sample.y)
    lhs = (1.0 + M) * ly[i2]
    rhs = ly[i3] + M * ly[i1] + 4.0 * D + 2.0 * C0 * (1.0 + M) * math.log((T - t1 + lam) / (T - t3 + lam))
    return OdeLemmaReport(M, D, float(lhs), float(rhs), bad)


@dataclass(frozen=True)
class MellBound:
    exact: float
    intermediate: float  # the sharper bound derived before simplification
    stated: float

    @property
    def holds(self) -> bool:
        return self.exact <= self.stated * (1 + 1e-12)


def m_ell_bound(ell: float, lam: float, C0: float, C1: float, T: float, nodes: int = SIMPSON_NODES) -> MellBound:
    """``M`` on the windows ``T-2l lam < T-l lam < T`` against its closed-form upper bounds."""
    if not ell > 1:
        raise ValueError(f"ell must exceed 1, got {ell}")
    if not ell * lam < T / 4:
        raise ValueError(f"need ell*lam < T/4, got {ell * lam} >= {T / 4}")
    exact = comparison_exponent(T - 2 * ell * lam, T - ell * lam, T, C0, C1, lam, T, nodes)
    growth = math.exp(2 * ell * lam * C1)
    if C0 > 0:
        inter = growth * ((ell + 1) ** C0 - 1) / (1 - ((ell + 1) / (2 * ell + 1)) ** C0)
        stated = math.exp(C1 * T) * (ell + 1) ** C0 / (1 - (2.0 / 3.0) ** C0)
    else:
        inter = growth * math.log(ell + 1) / math.log((2 * ell + 1) / (ell + 1))
        stated = math.exp(C1 * T) * math.log(ell + 1) / math.log(2.0)
    return MellBound(exact, inter, stated)


def corrected_m_ell_bound_c0_zero(ell: float, C1: float, T: float) -> float:
    """Valid simplification for ``C0 = 0``: ``(2l+1)/(l+1) >= 3/2`` for ``l >= 1``."""
    return math.exp(C1 * T) * math.log(ell + 1) / math.log(1.5)


# ---------------------------------------------------------------------------
# Localized smallness


def cutoff_constant(kappa: float, eps_cut: float) -> float:
    """``C_A = 4 max(1, kappa |grad phi|^2_inf)`` for a smoothstep cutoff of width ``eps_cut``.

    The quintic smoothstep has maximal slope 15/8 over its unit transition.
    """
    return 4.0 * max(1.0, kappa * (15.0 / (8.0 * eps_cut)) ** 2)


@dataclass(frozen=True)
class Smallness:
    theta: float
    h: float
    delta: float
    c1: float

    @property
    def exponent(self) -> float:
        """``c1 / theta``: the bound on ``log(int u0^2 / int_{B_rho} u(t)^2)``."""
        return self.c1 / self.theta


def smallness_theta(rho: float, eps_cut: float, C_A: float, T: float, ratio: float) -> Smallness:
    """Window length ``theta = delta h`` from the explicit choices of the localization argument.

    ``ratio = int |u0|^2 / int_{B_{rho - 2 eps_cut}} |u(T)|^2``.
    """
    if not (0 < eps_cut < rho / 2):
        raise ValueError(f"need 0 < eps_cut < rho/2, got eps_cut={eps_cut}, rho={rho}")
    if not (C_A > 0 and T > 0 and ratio > 0):
        raise ValueError("C_A, T and ratio must be positive")
    q = eps_cut * (2 * rho - 3 * eps_cut)
    delta = q / (2 * rho**2 * C_A)
    X = q**2 / (4 * rho**2 * C_A)  # delta * q / 2
    log_arg = 1.0 + math.log1p(C_A) + (2.0 / T + 1.0) * X + math.log(ratio)
    if not log_arg > 0:
        raise ValueError("smallness logarithm is not positive for this ratio")
    theta = X / log_arg
    h = theta / delta
    c1 = delta * (rho - eps_cut) ** 2
    return Smallness(theta, h, delta, c1)


# ---------------------------------------------------------------------------
# Inequality sides


def interpolation_sides(
    u0: ScalarField, uT: ScalarField, omega: np.ndarray, mu: float, c: float
) -> tuple[float, float]:
    """``int |u(T)|^2`` and ``(c int_omega |u(T)|^2)^{1-mu} (int |u(0)|^2)^mu``."""
    if not (0 < mu < 1 and c > 0):
        raise ValueError("need mu in (0,1) and c > 0")
    vol = uT.grid.cell_volume
    lhs = float((uT.values**2).sum() * vol)
    obs = float((uT.values**2 * omega).sum() * vol)
    init = float((u0.values**2).sum() * vol)
    if obs == 0.0 or init == 0.0:
        return lhs, 0.0
    return lhs, float(math.exp((1 - mu) * math.log(c * obs) + mu * math.log(init)))


def interpolation_constant(u0: ScalarField, uT: ScalarField, omega: np.ndarray, mu: float) -> float:
    """Smallest ``c`` making the interpolation inequality an equality for this pair."""
    vol = uT.grid.cell_volume
    lhs = (uT.values**2).sum() * vol
    obs = (uT.values**2 * omega).sum() * vol
    init = (u0.values**2).sum() * vol
    return float((lhs / init**mu) ** (1.0 / (1.0 - mu)) / obs)


def trace_scaling_factor(T: float, eps: float, p: float) -> float:
    """``T^{(p-1)/2p} eps^{1/2p} C_p``."""
    return T ** ((p - 1) / (2 * p)) * eps ** (1 / (2 * p)) * c_p(p)


def approximation_factor(T: float, eps: float, p: float) -> float:
    """``eps^{1/2p} (1 + T^{(p-1)/2p} C_p)``."""
    return eps ** (1 / (2 * p)) * (1 + T ** ((p - 1) / (2 * p)) * c_p(p))


def vacuity_threshold(dq: DataQuality, T: float, c: float) -> float:
    """``eps_0`` at which the prefactor ``1 - eps^{1/2p}(1+T^{..}C_p) M_p e^sigma`` reaches zero."""
    p = dq.p
    log_k = math.log1p(T ** ((p - 1) / (2 * p)) * c_p(p)) + math.log(dq.m_p) + sigma(dq, T, c)
    return math.exp(-2 * p * log_k)


@dataclass
class ObservationReport:
    eps: float
    sigma: float
    prefactor: float
    lhs: float
    rhs: float
    eps0: float
    vacuous: bool
    intermediate_lhs: float | None = None
    intermediate_rhs: float | None = None

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def observation_certificate(
    f0: KineticState,
    fT_average: ScalarField,
    uT: ScalarField,
    dq: DataQuality,
    T: float,
    omega: np.ndarray,
    c: float,
    op: EllipticOperator | None = None,
    cutoff: ScalarField | None = None,
    C_fit: float | None = None,
) -> ObservationReport:
    """Both sides of the kinetic observation inequality at one ``eps``.

    With ``op``, ``cutoff`` and ``C_fit`` also the approximation intermediate
    ``||chi(<f>(T) - u(T))||_{H^-1} <= eps^{1/2p}(1+T^{..}C_p) C ||f0||_{L^2p}``.
    """
    p = dq.p
    g = velocity_average(f0)
    g_norm = lp_norm(g, 2)
    eps = f0.epsilon
    if g_norm == 0.0:
        return ObservationReport(eps, float("nan"), 1.0, 0.0, 0.0, float("nan"), False)
    s = sigma(dq, T, c)
    k = approximation_factor(T, eps, p)
    prefactor = 1.0 - k * dq.m_p * math.exp(s)
    lhs = prefactor * g_norm
    rhs = math.exp(s) * lp_norm(fT_average, 2, region=omega)
    rep = ObservationReport(eps, s, prefactor, lhs, rhs, vacuity_threshold(dq, T, c), prefactor <= 0)
    if op is not None and cutoff is not None:
        diff = ScalarField(uT.grid, cutoff.values * (fT_average.values - uT.values))
        rep.intermediate_lhs = h_minus1_norm(op, diff)
        if C_fit is not None:
            rep.intermediate_rhs = k * C_fit * lp_norm(f0, 2 * p)
    return rep
