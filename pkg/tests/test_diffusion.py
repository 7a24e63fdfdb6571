import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlab.diffusion import (
    CG_RTOL,
    ConvergenceError,
    EllipticOperator,
    TimeScheme,
    _solve_spd,
    backward_series,
    eigendecompose,
    h_minus1_norm,
    heat_step,
    run_heat,
    solve_elliptic,
)
from kinlab.grid import OpacityField, ScalarField, SpatialGrid
from kinlab.harness.data import random_smooth_field


def _sine(g, k=1, l=1):
    return g.sample(lambda X, Y: np.sin(k * np.pi * X) * np.sin(l * np.pi * Y))


def _variable_op(n=15):
    g = SpatialGrid.unit_square(n)
    return EllipticOperator.from_opacity(OpacityField.from_function(g, lambda X, Y: 1 + 0.5 * np.sin(3 * X) * Y))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_operator_symmetric_positive(seed):
    op = _variable_op()
    rng = np.random.default_rng(seed)
    u = ScalarField(op.grid, rng.standard_normal(op.grid.shape))
    w = ScalarField(op.grid, rng.standard_normal(op.grid.shape))
    scale = np.sqrt(op.apply(u).dot(op.apply(u)) * w.dot(w))
    assert abs(op.apply(u).dot(w) - u.dot(op.apply(w))) <= 1e-13 * scale
    assert op.apply(u).dot(u) > 0


def test_energy_matches_quadratic_form():
    op = _variable_op()
    u = random_smooth_field(op.grid, np.random.default_rng(0))
    assert op.energy(u) == pytest.approx(op.apply(u).dot(u), rel=1e-12)


def test_face_coefficient_is_harmonic_mean():
    g = SpatialGrid.unit_square(4)
    a = OpacityField.from_function(g, lambda X, Y: 1 + X + 2 * Y)
    op = EllipticOperator.from_opacity(a)
    k = 1 / (2 * a.nodes)
    assert op.kx[1, 2] == pytest.approx(2 * k[0, 2] * k[1, 2] / (k[0, 2] + k[1, 2]), rel=1e-14)


def test_heat_decay_of_first_mode():
    g = SpatialGrid.unit_square(127)
    op = EllipticOperator.from_opacity(OpacityField.constant(g, 1.0))
    u0 = _sine(g)
    T = 0.1
    run = run_heat(op, u0, T, 256, TimeScheme.CRANK_NICOLSON)
    ratio = run.final.dot(u0) / u0.dot(u0)
    assert ratio == pytest.approx(np.exp(-np.pi**2 * T), rel=1e-3)


def test_heat_zero_and_dt_guard():
    op = _variable_op(5)
    z = ScalarField.zeros(op.grid)
    assert np.all(heat_step(z, op, 0.1).values == 0)
    with pytest.raises(ValueError):
        heat_step(z, op, 0.0)


def test_crank_nicolson_energy_identity():
    op = _variable_op()
    u = random_smooth_field(op.grid, np.random.default_rng(1))
    dt = 1e-3
    v = heat_step(u, op, dt)
    mid = (u + v) * 0.5
    lhs = 0.5 * v.dot(v) - 0.5 * u.dot(u) + dt * op.apply(mid).dot(mid)
    assert abs(lhs) <= 1e-10 * u.dot(u)


def test_backward_euler_positivity():
    op = _variable_op()
    u0 = ScalarField(op.grid, np.random.default_rng(2).uniform(0, 1, op.grid.shape))
    run = run_heat(op, u0, 0.05, 20, TimeScheme.BACKWARD_EULER)
    assert min(f.values.min() for f in run.fields) >= -1e-12 * u0.values.max()


def test_solve_elliptic_examples():
    op = _variable_op()
    assert np.all(solve_elliptic(op, ScalarField.zeros(op.grid)).values == 0)
    w = random_smooth_field(op.grid, np.random.default_rng(3))
    phi = solve_elliptic(op, w)
    r = op.apply(phi) - w
    assert np.sqrt(r.dot(r) / w.dot(w)) <= 1e-10
    b = eigendecompose(op, 1)
    e1 = b.field(0)
    assert np.allclose(solve_elliptic(op, e1).values, e1.values / b.values[0], atol=1e-9)


def test_cg_residual_meets_tolerance():
    op = _variable_op(31)
    w = random_smooth_field(op.grid, np.random.default_rng(4)).values.ravel()
    x = _solve_spd(op.matrix, w, op.diagonal)
    assert np.linalg.norm(op.matrix @ x - w) / np.linalg.norm(w) <= CG_RTOL


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cg_failure_raises_with_history():
    # singular system with a right-hand side outside the range: no solution exists
    import scipy.sparse as sp

    A = sp.diags(np.r_[np.linspace(1, 2, 49), 0.0]).tocsr()
    with pytest.raises(ConvergenceError) as info:
        _solve_spd(A, np.ones(50), np.ones(50))
    assert len(info.value.history) > 0


def test_h_minus1_examples():
    g = SpatialGrid.unit_square(63)
    op = EllipticOperator.from_opacity(OpacityField.constant(g, 1.0))
    w = _sine(g)
    assert h_minus1_norm(op, w) == pytest.approx(np.sqrt(w.dot(w)) / np.pi, rel=1e-3)
    assert h_minus1_norm(op, w * -3.0) == pytest.approx(3 * h_minus1_norm(op, w), rel=1e-12)
    b = eigendecompose(EllipticOperator.constant(SpatialGrid.unit_square(15), 1.0), 1)
    op15 = EllipticOperator.constant(b.grid, 1.0)
    assert h_minus1_norm(op15, b.field(0)) == pytest.approx(1 / np.sqrt(b.values[0]), rel=1e-10)


def test_h_minus1_matches_gradient_integral():
    op = _variable_op()
    w = random_smooth_field(op.grid, np.random.default_rng(5))
    phi = solve_elliptic(op, w)
    assert op.energy(phi) == pytest.approx(h_minus1_norm(op, w) ** 2, rel=1e-9)


def test_eigendecompose_examples():
    g = SpatialGrid.unit_square(31)
    b = eigendecompose(EllipticOperator.constant(g, 1.0), 20)
    assert b.values[0] == pytest.approx(2 * np.pi**2, rel=0.01)
    assert b.values[1] == pytest.approx(b.values[2], rel=1e-8)
    assert np.abs(b.gram() - np.eye(20)).max() <= 1e-10
    op = EllipticOperator.constant(g, 1.0)
    for i in range(20):
        r = op.apply(b.field(i)) - b.field(i) * b.values[i]
        assert np.sqrt(r.dot(r)) <= 1e-8 * b.values[i]


def test_eigendecompose_guards():
    op = EllipticOperator.constant(SpatialGrid.unit_square(65), 1.0)
    with pytest.raises(ValueError):
        eigendecompose(op, 3)
    with pytest.raises(ValueError):
        eigendecompose(EllipticOperator.constant(SpatialGrid.unit_square(4), 1.0), 17)


def test_spectral_evolution_matches_time_stepping():
    op = _variable_op(11)
    b = eigendecompose(op, op.grid.size)
    u0 = random_smooth_field(op.grid, np.random.default_rng(6))
    exact = b.evolve(u0, 0.05)
    cn = run_heat(op, u0, 0.05, 400).final
    assert np.abs(exact.values - cn.values).max() <= 1e-5 * np.abs(u0.values).max()
    with pytest.raises(ValueError):
        eigendecompose(op, 5).evolve(u0, 0.1)


def test_backward_machinery_on_eigenfunction():
    op = _variable_op(15)
    b = eigendecompose(op, 3)
    run = run_heat(op, b.field(2), 0.1, 50, TimeScheme.BACKWARD_EULER)
    q = backward_series(op, run).quotient
    assert np.abs(q / b.values[2] - 1).max() <= 1e-6


def test_dirichlet_quotient_nonincreasing_random():
    op = _variable_op(15)
    u0 = random_smooth_field(op.grid, np.random.default_rng(7))
    bs = backward_series(op, run_heat(op, u0, 0.1, 50, TimeScheme.BACKWARD_EULER))
    q = bs.quotient
    assert np.diff(q).max() <= 1e-8 * q[0]
    assert bs.y[0] <= np.exp(2 * 0.1 * q[0]) * bs.y[-1] * (1 + 1e-6)
