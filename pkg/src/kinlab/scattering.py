"""Neutron and Fokker-Planck scattering operators and their relaxation steps."""

from __future__ import annotations

import enum

import numpy as np

from .grid import KineticState, OpacityField, VelocityQuadrature


class ScatteringKind(enum.Enum):
    NEUTRON = "neutron"
    FOKKER_PLANCK = "fokker_planck"

    @classmethod
    def parse(cls, text: str) -> "ScatteringKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"fp": "fokker_planck", "fokkerplanck": "fokker_planck"}
        return cls(aliases.get(key, key))


def fokker_planck_symbol(quad: VelocityQuadrature) -> np.ndarray:
    """Eigenvalues of the periodic 3-point ``-(1/(d-1)) Laplace-Beltrami`` stencil.

    Mode ``k`` (FFT ordering) has eigenvalue ``(2 - 2 cos(k dtheta)) / dtheta^2 / (d-1)``.
    """
    h = quad.dtheta
    k = np.fft.fftfreq(quad.nv, d=1.0 / quad.nv)
    return (2.0 - 2.0 * np.cos(k * h)) / h**2 / (quad.d - 1)


def _deviation(f: KineticState) -> np.ndarray:
    return f.values - f.quad.average(f.values)[..., None]


def apply_scattering(kind: ScatteringKind, f: KineticState) -> KineticState:
    if kind is ScatteringKind.NEUTRON:
        return f.replace(_deviation(f))
    h = f.quad.dtheta
    v = f.values
    lap = (np.roll(v, -1, axis=-1) - 2.0 * v + np.roll(v, 1, axis=-1)) / h**2
    return f.replace(-lap / (f.quad.d - 1))


class RelaxationMethod(enum.Enum):
    EXACT = "exact"
    BACKWARD_EULER = "backward_euler"


def _check_method(kind: ScatteringKind, method: RelaxationMethod) -> None:
    if kind is ScatteringKind.NEUTRON and method is not RelaxationMethod.EXACT:
        raise ValueError("neutron relaxation is always integrated exactly")


def relaxation_step(
    kind: ScatteringKind,
    f: KineticState,
    a: OpacityField,
    dt: float,
    method: RelaxationMethod = RelaxationMethod.EXACT,
) -> KineticState:
    """Advance ``df/dt = -(a/eps^2) S(f)`` by ``dt`` with transport frozen.

    The angular stencil is circulant, so both the exact propagator and the
    backward-Euler solve are diagonal in the FFT basis.  Backward Euler damps
    the first harmonic by ``1/(1+s)`` instead of ``exp(-s)``; inside the
    splitting that inflates the diffusion coefficient by about ``1 + s/2``
    with ``s = a dt/eps^2``, which the CFL keeps from shrinking as eps -> 0.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_method(kind, method)
    s = a.nodes * dt / f.epsilon**2
    if kind is ScatteringKind.NEUTRON:
        mean = f.quad.average(f.values)[..., None]
        new = mean + (f.values - mean) * np.exp(-s)[..., None]
    else:
        lam = fokker_planck_symbol(f.quad)
        spec = np.fft.fft(f.values, axis=-1)
        if method is RelaxationMethod.EXACT:
            spec *= np.exp(-s[..., None] * lam[None, None, :])
        else:
            spec /= 1.0 + s[..., None] * lam[None, None, :]
        new = np.fft.ifft(spec, axis=-1).real
    if not np.all(np.isfinite(new)):
        raise FloatingPointError(
            f"relaxation produced non-finite values (kind={kind.value}, dt={dt}, eps={f.epsilon})"
        )
    return f.replace(new)


def relaxation_anisotropy_integral(
    kind: ScatteringKind,
    before: KineticState,
    after: KineticState,
    a: OpacityField,
    dt: float,
    method: RelaxationMethod = RelaxationMethod.EXACT,
) -> float:
    """Time integral of ``||f - <f>||^2_{L2(Omega x S)}`` over one relaxation substep.

    Exact integrators: every angular mode decays as ``exp(-a lam_k t/eps^2)``,
    so the integral is summed in closed form (Parseval for the uniform
    weights).  Backward Euler: the rectangle ``dt * ||dev(after)||^2``,
    matching the dissipation the implicit step actually produces.
    """
    _check_method(kind, method)
    w = before.quad.weights
    vol = before.grid.cell_volume
    rate = a.nodes / before.epsilon**2
    if kind is ScatteringKind.NEUTRON:
        dev2 = ((_deviation(before) ** 2) * w).sum(axis=-1)
        factor = -np.expm1(-2.0 * rate * dt) / (2.0 * rate)
        return float((dev2 * factor).sum() * vol)
    if method is RelaxationMethod.BACKWARD_EULER:
        dev2 = ((_deviation(after) ** 2) * w).sum()
        return float(dt * dev2 * vol)
    nv = before.quad.nv
    lam = fokker_planck_symbol(before.quad)
    spec2 = np.abs(np.fft.fft(before.values, axis=-1)) ** 2 * (w[0] / nv)
    r = rate[..., None] * lam[None, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(lam[None, None, :] > 0, -np.expm1(-2.0 * r * dt) / (2.0 * r), 0.0)
    return float((spec2 * factor).sum() * vol)


def dirichlet_form(kind: ScatteringKind, f: KineticState) -> float:
    """``sum_x sum_j w_j f (S f)`` times the cell volume."""
    sf = apply_scattering(kind, f)
    return float((f.values * sf.values * f.quad.weights).sum() * f.grid.cell_volume)
