"""Initial data, opacity profiles and observation regions used by the experiments."""

from __future__ import annotations

import numpy as np

from ..grid import Ball, KineticState, OpacityField, Rectangle, ScalarField, SpatialGrid, VelocityQuadrature


def cubic_bump(X, Y, cx: float, cy: float, radius: float) -> np.ndarray:
    """``(1 - r^2/R^2)^3`` inside the disc, zero outside; C^2 across the rim."""
    s = ((X - cx) ** 2 + (Y - cy) ** 2) / radius**2
    return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** 3, 0.0)


def bump_field(grid: SpatialGrid, radius: float, center=(0.5, 0.5)) -> ScalarField:
    cx, cy = center[0] * grid.lx, center[1] * grid.ly
    return grid.sample(lambda X, Y: cubic_bump(X, Y, cx, cy, radius))


def random_smooth_field(grid: SpatialGrid, rng: np.random.Generator, modes: int = 6, decay: float = 2.0) -> ScalarField:
    """Random sine series with coefficients ``N(0,1) / (k^2 + l^2)^(decay/2)``."""
    X, Y = grid.mesh()
    out = np.zeros(grid.shape)
    for k in range(1, modes + 1):
        sx = np.sin(k * np.pi * X / grid.lx)
        for l in range(1, modes + 1):
            out += rng.standard_normal() / (k * k + l * l) ** (decay / 2) * sx * np.sin(l * np.pi * Y / grid.ly)
    return ScalarField(grid, out)


def initial_state(
    grid: SpatialGrid, quad: VelocityQuadrature, spec: tuple, eps: float, radius: float | None = None
) -> KineticState:
    """``spec`` is ``(kind, radius)`` with kind ``bump``, ``bump_aniso`` or ``zero``."""
    kind = spec[0]
    r = float(spec[1]) if radius is None and len(spec) > 1 else radius
    if kind == "zero":
        return KineticState(grid, quad, np.zeros((*grid.shape, quad.nv)), eps)
    g = bump_field(grid, r)
    if kind == "bump":
        return KineticState.isotropic(g, quad, eps)
    if kind == "bump_aniso":
        vals = g.values[..., None] * (1.0 + 0.5 * np.cos(quad.angles))
        return KineticState(grid, quad, vals, eps)
    raise ValueError(f"unknown initial data {kind!r}")


def opacity_field(grid: SpatialGrid, spec: tuple) -> OpacityField:
    """``constant c`` or ``bump amp``: ``a = 1 + amp * (1 - r^2/0.3^2)^3`` around the centre."""
    kind, value = spec[0], float(spec[1])
    if kind == "constant":
        return OpacityField.constant(grid, value)
    if kind == "bump":
        cx, cy = 0.5 * grid.lx, 0.5 * grid.ly
        return OpacityField.from_function(grid, lambda X, Y: 1.0 + value * cubic_bump(X, Y, cx, cy, 0.3))
    raise ValueError(f"unknown opacity {kind!r}")


def region(spec: tuple) -> Ball | Rectangle:
    kind, *vals = spec
    vals = [float(v) for v in vals]
    if kind == "ball" and len(vals) == 3:
        return Ball(*vals)
    if kind in ("rect", "rectangle") and len(vals) == 4:
        return Rectangle(*vals)
    raise ValueError(f"bad region spec {spec!r}")
