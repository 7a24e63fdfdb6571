"""Discrete geometry: spatial grid, velocity quadrature, fields and norms.

Spatial nodes are the interior points of a uniform grid on the rectangle
``(0, lx) x (0, ly)``; values on the boundary are zero (homogeneous Dirichlet
ghosts).  Every volume integral uses the same cell quadrature ``dx*dy`` so
discrete integration-by-parts identities hold exactly.

Array layout is row-major: scalar fields are ``(nx, ny)``, kinetic states are
``(nx, ny, nv)`` with the ordinate index fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    lx: float
    ly: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"need at least one interior node per axis, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain edge lengths must be positive")

    @classmethod
    def unit_square(cls, n: int) -> "SpatialGrid":
        return cls(1.0, 1.0, n, n)

    @property
    def dx(self) -> float:
        return self.lx / (self.nx + 1)

    @property
    def dy(self) -> float:
        return self.ly / (self.ny + 1)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(1, self.ny + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def sample(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = self.mesh()
        return ScalarField(self, np.asarray(fn(X, Y), dtype=float) * np.ones(self.shape))

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.lx + self.ly)

    @property
    def boundary_faces(self) -> "BoundaryFaces":
        return _boundary_faces(self)


@dataclass(frozen=True)
class BoundaryFaces:
    """Boundary faces in the fixed order left, right, bottom, top.

    ``length`` is the portion of the edge closest to the adjacent node, so the
    lengths tile the perimeter exactly.  ``flux_length`` is the cell face seen
    by the upwind flux (``dy`` or ``dx``).
    """

    i: np.ndarray
    j: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    flux_length: np.ndarray

    def __len__(self):
        return len(self.i)


def _edge_lengths(n: int, h: float, total: float) -> np.ndarray:
    lengths = np.full(n, h)
    if n == 1:
        lengths[0] = total
    else:
        lengths[0] = lengths[-1] = 1.5 * h
    return lengths


def _boundary_faces(grid: SpatialGrid) -> BoundaryFaces:
    nx, ny = grid.nx, grid.ny
    jy = np.arange(ny)
    ix = np.arange(nx)
    i = np.concatenate([np.zeros(ny, int), np.full(ny, nx - 1), ix, ix])
    j = np.concatenate([jy, jy, np.zeros(nx, int), np.full(nx, ny - 1)])
    normal = np.concatenate(
        [
            np.tile([-1.0, 0.0], (ny, 1)),
            np.tile([1.0, 0.0], (ny, 1)),
            np.tile([0.0, -1.0], (nx, 1)),
            np.tile([0.0, 1.0], (nx, 1)),
        ]
    )
    ly_len = _edge_lengths(ny, grid.dy, grid.ly)
    lx_len = _edge_lengths(nx, grid.dx, grid.lx)
    length = np.concatenate([ly_len, ly_len, lx_len, lx_len])
    flux_length = np.concatenate(
        [np.full(2 * ny, grid.dy), np.full(2 * nx, grid.dx)]
    )
    return BoundaryFaces(i, j, normal, length, flux_length)


@dataclass(frozen=True)
class VelocityQuadrature:
    """Equispaced ordinates on the unit circle.

    The stored dimension keeps the constants ``1/d``, ``d-1`` and the sphere
    measure explicit in downstream formulas.
    """

    nv: int
    d: int = 2

    def __post_init__(self):
        if self.d != 2:
            raise NotImplementedError("only the circle S^1 is discretized")
        if self.nv < 4:
            raise ValueError(f"need at least 4 ordinates, got {self.nv}")

    @property
    def sphere_measure(self) -> float:
        return 2.0 * np.pi

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.nv

    @property
    def angles(self) -> np.ndarray:
        return self.dtheta * np.arange(self.nv)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.nv, self.dtheta)

    @property
    def v(self) -> np.ndarray:
        """Ordinates as an ``(nv, 2)`` array; round-off zeros are flushed."""
        th = self.angles
        v = np.stack([np.cos(th), np.sin(th)], axis=1)
        v[np.abs(v) < 1e-14] = 0.0
        return v

    def average(self, values: np.ndarray) -> np.ndarray:
        """Normalized average over the last axis."""
        return (values * self.weights).sum(axis=-1) / self.sphere_measure

    def moments(self) -> tuple[float, np.ndarray, np.ndarray]:
        v = self.v
        w = self.weights / self.sphere_measure
        zeroth = w.sum()
        first = (v * w[:, None]).sum(axis=0)
        second = np.einsum("j,ja,jb->ab", w, v, v)
        return zeroth, first, second


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite values in scalar field")

    @classmethod
    def zeros(cls, grid: SpatialGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c) -> "ScalarField":
        if isinstance(c, ScalarField):
            return ScalarField(self.grid, self.values * c.values)
        return ScalarField(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def dot(self, other: "ScalarField") -> float:
        """L2(Omega) inner product with the cell quadrature."""
        return float((self.values * other.values).sum() * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class KineticState:
    grid: SpatialGrid
    quad: VelocityQuadrature
    values: np.ndarray
    epsilon: float
    t: float = 0.0

    def __post_init__(self):
        expected = (*self.grid.shape, self.quad.nv)
        if self.values.shape != expected:
            raise ValueError(f"state shape {self.values.shape} != {expected}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(f"non-finite kinetic state at t={self.t}")

    def replace(self, values: np.ndarray, t: float | None = None) -> "KineticState":
        return KineticState(self.grid, self.quad, values, self.epsilon, self.t if t is None else t)

    @classmethod
    def from_function(
        cls,
        grid: SpatialGrid,
        quad: VelocityQuadrature,
        fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
        epsilon: float,
    ) -> "KineticState":
        """Sample ``fn(x, y, theta)`` on the phase-space grid."""
        X, Y = grid.mesh()
        th = quad.angles
        vals = fn(X[..., None], Y[..., None], th[None, None, :])
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (*grid.shape, quad.nv)).copy()
        return cls(grid, quad, vals, epsilon)

    @classmethod
    def isotropic(cls, g: ScalarField, quad: VelocityQuadrature, epsilon: float) -> "KineticState":
        vals = np.repeat(g.values[..., None], quad.nv, axis=-1)
        return cls(g.grid, quad, vals, epsilon)


@dataclass(frozen=True, eq=False)
class OpacityField:
    """Scattering opacity sampled at nodes and at x-/y-faces.

    ``x_faces`` has shape ``(nx+1, ny)``: face ``k`` sits at ``x=(k+1/2)dx``
    between node ``k-1`` (or the left ghost) and node ``k`` (or the right
    ghost).  ``y_faces`` is the analogue ``(nx, ny+1)``.
    """

    grid: SpatialGrid
    nodes: np.ndarray
    x_faces: np.ndarray
    y_faces: np.ndarray
    c_min: float = field(init=False)
    c_max: float = field(init=False)

    def __post_init__(self):
        allv = np.concatenate([self.nodes.ravel(), self.x_faces.ravel(), self.y_faces.ravel()])
        object.__setattr__(self, "c_min", float(allv.min()))
        object.__setattr__(self, "c_max", float(allv.max()))
        if not self.c_min > 0:
            raise ValueError(f"opacity must be positive, min is {self.c_min}")

    @classmethod
    def from_function(cls, grid: SpatialGrid, fn: Callable) -> "OpacityField":
        x, y = grid.x, grid.y
        xf = grid.dx * (np.arange(grid.nx + 1) + 0.5)
        yf = grid.dy * (np.arange(grid.ny + 1) + 0.5)

        def ev(a, b):
            A, B = np.meshgrid(a, b, indexing="ij")
            return np.asarray(fn(A, B), dtype=float) * np.ones(A.shape)

        return cls(grid, ev(x, y), ev(xf, y), ev(x, yf))

    @classmethod
    def constant(cls, grid: SpatialGrid, value: float) -> "OpacityField":
        return cls.from_function(grid, lambda X, Y: np.full(X.shape, float(value)))


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float


@dataclass(frozen=True)
class Ball:
    cx: float
    cy: float
    radius: float


Region = Union[Rectangle, Ball]


def subdomain_mask(grid: SpatialGrid, region: Region) -> np.ndarray:
    """Boolean node mask of a rectangle (closed) or ball (open)."""
    X, Y = grid.mesh()
    if isinstance(region, Rectangle):
        mask = (X >= region.x0) & (X <= region.x1) & (Y >= region.y0) & (Y <= region.y1)
    elif isinstance(region, Ball):
        mask = (X - region.cx) ** 2 + (Y - region.cy) ** 2 < region.radius**2
    else:
        raise TypeError(f"unknown region {region!r}")
    if not mask.any():
        raise ValueError(f"{region} contains no interior node")
    return mask


def velocity_average(f: KineticState) -> ScalarField:
    return ScalarField(f.grid, f.quad.average(f.values))


def lp_norm(
    f: KineticState | ScalarField,
    exponent: float,
    region: np.ndarray | None = None,
) -> float:
    """``(sum of quadrature weight * |f|^exponent)^(1/exponent)``.

    Kinetic states integrate against the unnormalized measure ``dx dv`` (total
    velocity mass ``2*pi``).  ``region`` is an optional node mask.
    """
    if not exponent >= 1:
        raise ValueError(f"exponent must be >= 1, got {exponent}")
    vals = np.abs(f.values)
    if region is not None:
        vals = vals * (region[..., None] if vals.ndim == 3 else region)
    scale = vals.max() if vals.size else 0.0
    if scale == 0.0:
        return 0.0
    p = vals / scale
    if isinstance(f, KineticState):
        s = (p**exponent * f.quad.weights).sum()
    else:
        s = (p**exponent).sum()
    return float(scale * (s * f.grid.cell_volume) ** (1.0 / exponent))


@dataclass
class TraceRecord:
    """Outgoing boundary values of a kinetic run, one entry per transport step.

    Each entry holds the face values ``(n_faces, nv)`` that fed the upwind
    outflow flux during a substep of length ``dt``.
    """

    grid: SpatialGrid
    quad: VelocityQuadrature
    dts: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, dt: float, face_values: np.ndarray) -> None:
        self.dts.append(float(dt))
        self.values.append(face_values)

    @property
    def duration(self) -> float:
        return float(sum(self.dts))


def boundary_outflow_integral(trace: TraceRecord, exponent: float, weighted: bool = True) -> float:
    """Time-integrated outflow of ``|f|^exponent`` over ``v.n > 0``.

    With ``weighted`` the integrand carries the factor ``v.n``.
    """
    if not exponent >= 2:
        raise ValueError(f"trace exponent must be >= 2, got {exponent}")
    faces = trace.grid.boundary_faces
    vn = faces.normal @ trace.quad.v.T  # (n_faces, nv)
    kernel = np.where(vn > 0, vn if weighted else 1.0, 0.0)
    kernel = kernel * faces.length[:, None] * trace.quad.weights[None, :]
    total = 0.0
    for dt, fv in zip(trace.dts, trace.values):
        total += dt * float((kernel * np.abs(fv) ** exponent).sum())
    return total
