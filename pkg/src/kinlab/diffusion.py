"""Variable-coefficient heat solver, weighted H^-1 norm and Dirichlet eigenbasis.

The operator is ``L u = -div(kappa grad u)`` with homogeneous Dirichlet data,
discretized by the 5-point flux stencil.  For the diffusion limit of the
kinetic equation ``kappa = 1/(d a)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .grid import OpacityField, ScalarField, SpatialGrid

CG_RTOL = 1e-11
DENSE_LIMIT = 4096


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


class TimeScheme(enum.Enum):
    BACKWARD_EULER = "backward_euler"
    CRANK_NICOLSON = "crank_nicolson"

    @classmethod
    def parse(cls, text: str) -> "TimeScheme":
        key = text.strip().lower().replace("-", "_")
        return cls({"be": "backward_euler", "cn": "crank_nicolson"}.get(key, key))


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """``-div(kappa grad .)`` on the interior nodes of ``grid``.

    ``kx`` holds the coefficient on x-faces ``(nx+1, ny)``, ``ky`` on
    y-faces ``(nx, ny+1)``; the outermost faces couple to the zero ghosts.
    """

    grid: SpatialGrid
    kx: np.ndarray
    ky: np.ndarray
    matrix: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        if self.kx.shape != (g.nx + 1, g.ny) or self.ky.shape != (g.nx, g.ny + 1):
            raise ValueError("face coefficient arrays do not match the grid")
        if not (self.kx.min() > 0 and self.ky.min() > 0):
            raise ValueError("diffusion coefficient must be positive")
        object.__setattr__(self, "matrix", self._assemble())

    @classmethod
    def from_opacity(cls, a: OpacityField, d: int = 2) -> "EllipticOperator":
        """Coefficient ``1/(d a)``: harmonic node means inside, face samples on the boundary."""
        kn = 1.0 / (d * a.nodes)
        kx = 1.0 / (d * a.x_faces)
        ky = 1.0 / (d * a.y_faces)
        kx[1:-1] = _harmonic(kn[:-1], kn[1:])
        ky[:, 1:-1] = _harmonic(kn[:, :-1], kn[:, 1:])
        return cls(a.grid, kx, ky)

    @classmethod
    def constant(cls, grid: SpatialGrid, kappa: float) -> "EllipticOperator":
        return cls(grid, np.full((grid.nx + 1, grid.ny), float(kappa)), np.full((grid.nx, grid.ny + 1), float(kappa)))

    def _assemble(self) -> sp.csr_matrix:
        g = self.grid
        nx, ny = g.nx, g.ny
        idx = np.arange(nx * ny).reshape(nx, ny)
        cx = self.kx / g.dx**2
        cy = self.ky / g.dy**2
        diag = (cx[:-1] + cx[1:] + cy[:, :-1] + cy[:, 1:]).ravel()
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [diag]
        # x-neighbours through interior faces 1..nx-1
        w = -cx[1:-1].ravel()
        a, b = idx[:-1].ravel(), idx[1:].ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [w, w]
        w = -cy[:, 1:-1].ravel()
        a, b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [w, w]
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)
        )
        return m.tocsr()

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def apply(self, u: ScalarField) -> ScalarField:
        return ScalarField(self.grid, (self.matrix @ u.values.ravel()).reshape(self.grid.shape))

    def face_gradients(self, u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
        """Differences across x-faces ``(nx+1, ny)`` and y-faces ``(nx, ny+1)``, ghosts zero."""
        v = u.values
        px = np.pad(v, ((1, 1), (0, 0)))
        py = np.pad(v, ((0, 0), (1, 1)))
        return np.diff(px, axis=0) / self.grid.dx, np.diff(py, axis=1) / self.grid.dy

    def face_coordinates(self) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
        g = self.grid
        xf = g.dx * (np.arange(g.nx + 1) + 0.5)
        yf = g.dy * (np.arange(g.ny + 1) + 0.5)
        return np.meshgrid(xf, g.y, indexing="ij"), np.meshgrid(g.x, yf, indexing="ij")

    def energy(self, u: ScalarField, x_weight: np.ndarray | None = None, y_weight: np.ndarray | None = None) -> float:
        """``int kappa |grad u|^2 (weight)`` by face quadrature; equals ``<Lu, u>`` unweighted."""
        gx, gy = self.face_gradients(u)
        ex = self.kx * gx**2
        ey = self.ky * gy**2
        if x_weight is not None:
            ex = ex * x_weight
        if y_weight is not None:
            ey = ey * y_weight
        return float((ex.sum() + ey.sum()) * self.grid.cell_volume)


def _solve_spd(A, b: np.ndarray, diag: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    history: list[float] = []
    Aop = A if sp.issparse(A) else LinearOperator((n, n), matvec=A, dtype=float)

    def record(xk):
        history.append(float(np.linalg.norm(b - Aop @ xk) / bnorm))

    M = sp.diags(1.0 / diag)
    x, info = cg(Aop, b, x0=x0, rtol=CG_RTOL, maxiter=10 * n, M=M)
    res = np.linalg.norm(b - Aop @ x) / bnorm
    if info != 0 or res > CG_RTOL:
        # restart from the current iterate with residual tracking
        x, info = cg(Aop, b, x0=x, rtol=CG_RTOL, maxiter=10 * n, M=M, callback=record)
        res = np.linalg.norm(b - Aop @ x) / bnorm
        if info != 0 or res > CG_RTOL:
            raise ConvergenceError(f"CG stalled at relative residual {res:.3e}", history)
    return x


def solve_elliptic(op: EllipticOperator, w: ScalarField) -> ScalarField:
    x = _solve_spd(op.matrix, w.values.ravel(), op.diagonal)
    return ScalarField(op.grid, x.reshape(op.grid.shape))


def h_minus1_norm(op: EllipticOperator, w: ScalarField) -> float:
    """``sqrt(<w, L^-1 w>)``, the weighted-gradient norm of the elliptic potential."""
    phi = solve_elliptic(op, w)
    s = w.dot(phi)
    if s < -1e-14 * max(w.dot(w), 1e-300):
        raise RuntimeError(f"negative H^-1 inner product {s:.3e}; operator is not SPD")
    return float(np.sqrt(max(s, 0.0)))


class HeatStepper:
    """Cached system matrices for repeated steps of one scheme and dt."""

    def __init__(self, op: EllipticOperator, dt: float, scheme: TimeScheme = TimeScheme.CRANK_NICOLSON):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.op, self.dt, self.scheme = op, dt, scheme
        eye = sp.identity(op.grid.size, format="csr")
        theta = 1.0 if scheme is TimeScheme.BACKWARD_EULER else 0.5
        self.lhs = (eye + theta * dt * op.matrix).tocsr()
        self.rhs = None if theta == 1.0 else (eye - (1 - theta) * dt * op.matrix).tocsr()
        self.diag = self.lhs.diagonal()

    def __call__(self, u: ScalarField) -> ScalarField:
        b = u.values.ravel()
        if self.rhs is not None:
            b = self.rhs @ b
        x = _solve_spd(self.lhs, b, self.diag, x0=u.values.ravel().copy())
        return ScalarField(u.grid, x.reshape(u.grid.shape))


def heat_step(
    u: ScalarField, op: EllipticOperator, dt: float, scheme: TimeScheme = TimeScheme.CRANK_NICOLSON
) -> ScalarField:
    return HeatStepper(op, dt, scheme)(u)


@dataclass
class HeatRun:
    times: list
    fields: list

    @property
    def final(self) -> ScalarField:
        return self.fields[-1]


def run_heat(
    op: EllipticOperator,
    u0: ScalarField,
    T: float,
    n_steps: int,
    scheme: TimeScheme = TimeScheme.CRANK_NICOLSON,
    record_every: int = 1,
) -> HeatRun:
    step = HeatStepper(op, T / n_steps, scheme)
    times, fields = [0.0], [u0]
    u = u0
    for n in range(1, n_steps + 1):
        u = step(u)
        if n % record_every == 0 or n == n_steps:
            times.append(n * T / n_steps)
            fields.append(u)
    return HeatRun(times, fields)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    grid: SpatialGrid
    values: np.ndarray
    vectors: np.ndarray  # (count, nx, ny), L2(Omega)-orthonormal

    def __len__(self):
        return len(self.values)

    def field(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.vectors[i])

    def coefficients(self, u: ScalarField) -> np.ndarray:
        return (self.vectors * u.values).sum(axis=(1, 2)) * self.grid.cell_volume

    def synthesize(self, coeffs: np.ndarray) -> ScalarField:
        k = len(coeffs)
        return ScalarField(self.grid, np.tensordot(coeffs, self.vectors[:k], axes=1))

    def evolve(self, u0: ScalarField, t: float) -> ScalarField:
        """Exact semi-discrete heat flow ``exp(-t L) u0``; needs the full basis."""
        if len(self) != self.grid.size:
            raise ValueError("exact evolution needs the complete eigenbasis")
        return self.synthesize(np.exp(-t * self.values) * self.coefficients(u0))

    def gram(self, mask: np.ndarray | None = None) -> np.ndarray:
        flat = self.vectors.reshape(len(self), -1)
        if mask is not None:
            flat = flat * mask.ravel()
        return flat @ self.vectors.reshape(len(self), -1).T * self.grid.cell_volume


def eigendecompose(op: EllipticOperator, count: int) -> EigenBasis:
    n = op.grid.size
    if n > DENSE_LIMIT:
        raise ValueError(f"dense eigensolve limited to {DENSE_LIMIT} unknowns, grid has {n}")
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in [1, {n}], got {count}")
    vals, vecs = scipy.linalg.eigh(op.matrix.toarray(), subset_by_index=[0, count - 1])
    # fix the sign so the largest-magnitude entry of each vector is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(count)])
    vecs = vecs * signs / np.sqrt(op.grid.cell_volume)
    return EigenBasis(op.grid, vals, vecs.T.reshape(count, *op.grid.shape).copy())


@dataclass
class BackwardSeries:
    times: np.ndarray
    l2sq: np.ndarray
    y: np.ndarray  # weighted H^-1 norm squared

    @property
    def quotient(self) -> np.ndarray:
        return self.l2sq / self.y


def backward_series(op: EllipticOperator, run: HeatRun) -> BackwardSeries:
    l2 = np.array([u.dot(u) for u in run.fields])
    y = np.array([h_minus1_norm(op, u) ** 2 for u in run.fields])
    return BackwardSeries(np.asarray(run.times), l2, y)
