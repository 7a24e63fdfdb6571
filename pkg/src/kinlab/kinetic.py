"""Time integration of the scaled kinetic equation with absorbing boundary.

    df/dt + (1/eps) v.grad f + (a/eps^2) S(f) = 0,   f = 0 on incoming boundary.

Transport is explicit first-order upwind; scattering is the relaxation step
from :mod:`kinlab.scattering`.  The two are combined by Lie or Strang
splitting.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .grid import (
    KineticState,
    OpacityField,
    ScalarField,
    TraceRecord,
    velocity_average,
)
from .scattering import RelaxationMethod, ScatteringKind, relaxation_anisotropy_integral, relaxation_step


class CFLViolation(ValueError):
    pass


class Splitting(enum.Enum):
    LIE = "lie"
    STRANG = "strang"


def max_stable_dt(f: KineticState, cfl: float = 1.0) -> float:
    """Largest dt for which every ordinate's upwind update is a convex combination."""
    v = f.quad.v
    rate = (np.abs(v[:, 0]) / f.grid.dx + np.abs(v[:, 1]) / f.grid.dy).max()
    return cfl * f.epsilon / rate


class TransportResult(NamedTuple):
    state: KineticState
    face_values: np.ndarray
    outflow_rate: float


def transport_step(f: KineticState, dt: float, cfl: float = 1.0) -> TransportResult:
    """One upwind step of ``df/dt + (1/eps) v.grad f = 0`` with zero inflow.

    ``face_values`` are the boundary-adjacent node values ``(n_faces, nv)``
    used by the outflow flux; ``outflow_rate`` is the normalized mass flux
    ``(1/|S|) sum w_j (v.n)_+ f |face|`` leaving the domain.
    """
    limit = max_stable_dt(f, cfl)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"transport dt={dt:.6g} exceeds the stable limit {limit:.6g}")
    g, q = f.grid, f.quad
    v = q.v
    vals = f.values
    nx, ny, nv = vals.shape
    vxp, vxm = np.maximum(v[:, 0], 0.0), np.minimum(v[:, 0], 0.0)
    vyp, vym = np.maximum(v[:, 1], 0.0), np.minimum(v[:, 1], 0.0)

    zx = np.zeros((1, ny, nv))
    left = np.concatenate([zx, vals], axis=0)
    right = np.concatenate([vals, zx], axis=0)
    flux_x = vxp * left + vxm * right  # (nx+1, ny, nv)
    zy = np.zeros((nx, 1, nv))
    below = np.concatenate([zy, vals], axis=1)
    above = np.concatenate([vals, zy], axis=1)
    flux_y = vyp * below + vym * above  # (nx, ny+1, nv)

    div = (flux_x[1:] - flux_x[:-1]) / g.dx + (flux_y[:, 1:] - flux_y[:, :-1]) / g.dy
    new = vals - (dt / f.epsilon) * div

    faces = g.boundary_faces
    face_values = vals[faces.i, faces.j, :]
    vn = faces.normal @ v.T
    out = (np.maximum(vn, 0.0) * face_values * faces.flux_length[:, None] * q.weights).sum()
    return TransportResult(f.replace(new, f.t + dt), face_values, float(out / q.sphere_measure))


def compute_first_moment(f: KineticState) -> tuple[ScalarField, ScalarField]:
    v = f.quad.v
    w = f.quad.weights / f.quad.sphere_measure
    m1 = (f.values * (v[:, 0] * w)).sum(axis=-1)
    m2 = (f.values * (v[:, 1] * w)).sum(axis=-1)
    return ScalarField(f.grid, m1), ScalarField(f.grid, m2)


@dataclass(frozen=True)
class KineticRunConfig:
    T: float
    kind: ScatteringKind = ScatteringKind.NEUTRON
    splitting: Splitting = Splitting.STRANG
    cfl: float = 0.9
    n_snapshots: int = 1
    record_trace: bool = True
    relaxation: RelaxationMethod = RelaxationMethod.EXACT

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not (0 < self.cfl <= 1):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.n_snapshots < 1:
            raise ValueError("need at least one snapshot interval")


@dataclass
class KineticRunRecord:
    final: KineticState
    dt: float
    snapshot_times: list = field(default_factory=list)
    averages: list = field(default_factory=list)
    trace: TraceRecord | None = None
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    outflow: list = field(default_factory=list)
    anisotropy: list = field(default_factory=list)
    anisotropy_integral: list = field(default_factory=list)

    @property
    def anisotropy_l2(self) -> float:
        """``||f - <f>||_{L2(Omega x S x (0,T))}``."""
        return math.sqrt(sum(self.anisotropy_integral))

    def mass_balance_residuals(self) -> np.ndarray:
        m = np.asarray(self.mass)
        return m[1:] - m[:-1] + np.asarray(self.outflow)


def _l2sq(f: KineticState) -> float:
    return float((f.values**2 * f.quad.weights).sum() * f.grid.cell_volume)


def _anisotropy(f: KineticState) -> float:
    dev = f.values - f.quad.average(f.values)[..., None]
    return float((dev**2 * f.quad.weights).sum() * f.grid.cell_volume)


def _mass(f: KineticState) -> float:
    return float(f.quad.average(f.values).sum() * f.grid.cell_volume)


def run_kinetic(config: KineticRunConfig, f0: KineticState, a: OpacityField) -> KineticRunRecord:
    """Integrate from ``f0`` to ``config.T``.

    The step is the largest CFL-admissible dt dividing each of the
    ``n_snapshots`` equal intervals, so snapshots land exactly on step times.
    """
    interval = config.T / config.n_snapshots
    steps_per = max(1, math.ceil(interval / max_stable_dt(f0, config.cfl) - 1e-9))
    dt = interval / steps_per
    n_steps = steps_per * config.n_snapshots

    trace = TraceRecord(f0.grid, f0.quad) if config.record_trace else None
    rec = KineticRunRecord(final=f0, dt=dt, trace=trace)
    f = f0
    rec.snapshot_times.append(0.0)
    rec.averages.append(velocity_average(f))
    rec.times.append(0.0)
    rec.energy.append(_l2sq(f))
    rec.mass.append(_mass(f))
    rec.anisotropy.append(_anisotropy(f))

    def transport(state, h):
        res = transport_step(state, h, cfl=1.0)
        if trace is not None:
            trace.append(h, res.face_values)
        return res.state, h / state.epsilon * res.outflow_rate

    for n in range(1, n_steps + 1):
        t_new = n * dt
        if config.splitting is Splitting.LIE:
            before, out = transport(f, dt)
            f = relaxed = relaxation_step(config.kind, before, a, dt, config.relaxation)
        else:
            before, out1 = transport(f, 0.5 * dt)
            relaxed = relaxation_step(config.kind, before, a, dt, config.relaxation)
            f, out2 = transport(relaxed, 0.5 * dt)
            out = out1 + out2
        rec.anisotropy_integral.append(
            relaxation_anisotropy_integral(config.kind, before, relaxed, a, dt, config.relaxation)
        )
        f = f.replace(f.values, t_new)
        rec.times.append(t_new)
        rec.energy.append(_l2sq(f))
        rec.mass.append(_mass(f))
        rec.outflow.append(out)
        rec.anisotropy.append(_anisotropy(f))
        if n % steps_per == 0:
            rec.snapshot_times.append(t_new)
            rec.averages.append(velocity_average(f))
    rec.final = f
    return rec


SNAPSHOT_HEADER = np.dtype("<i8")


def write_snapshot(path: str | Path, f: KineticState, step: int, flags: int = 0) -> None:
    """Binary dump: five little-endian int64 ``(nx, ny, nv, step, flags)`` then float64 values."""
    nx, ny, nv = f.values.shape
    with open(path, "wb") as fh:
        fh.write(np.array([nx, ny, nv, step, flags], dtype=SNAPSHOT_HEADER).tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path: str | Path) -> tuple[np.ndarray, int, int]:
    raw = Path(path).read_bytes()
    header = np.frombuffer(raw[:40], dtype=SNAPSHOT_HEADER)
    nx, ny, nv, step, flags = (int(h) for h in header)
    values = np.frombuffer(raw[40:], dtype="<f8").reshape(nx, ny, nv).copy()
    return values, step, flags
