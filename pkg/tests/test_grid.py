import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlab.grid import (
    Ball,
    KineticState,
    OpacityField,
    Rectangle,
    ScalarField,
    SpatialGrid,
    TraceRecord,
    VelocityQuadrature,
    boundary_outflow_integral,
    lp_norm,
    subdomain_mask,
    velocity_average,
)


def test_spacing_and_interior_nodes():
    g = SpatialGrid(2.0, 1.0, 9, 4)
    assert g.dx == pytest.approx(0.2)
    assert g.dy == pytest.approx(0.2)
    assert g.x.min() > 0 and g.x.max() < 2.0
    assert g.y.min() > 0 and g.y.max() < 1.0


@pytest.mark.parametrize("shape", [(1, 1), (5, 3), (63, 63), (10, 31)])
def test_boundary_faces(shape):
    g = SpatialGrid(1.3, 0.7, *shape)
    faces = g.boundary_faces
    assert np.allclose(np.linalg.norm(faces.normal, axis=1), 1.0)
    assert np.all((faces.normal == 0).sum(axis=1) == 1)
    assert faces.length.sum() == pytest.approx(2 * (1.3 + 0.7), rel=1e-14)


@pytest.mark.parametrize("nv", [4, 8, 64])
def test_moments(nv):
    q = VelocityQuadrature(nv)
    assert q.weights.sum() == pytest.approx(2 * np.pi, abs=1e-14)
    m0, m1, m2 = q.moments()
    assert abs(m0 - 1) <= 1e-14
    assert np.abs(m1).max() <= 1e-14
    assert np.abs(m2 - np.eye(2) / 2).max() <= 1e-14


def test_velocity_average_examples():
    g = SpatialGrid.unit_square(5)
    q = VelocityQuadrature(8)
    f = KineticState(g, q, np.full((5, 5, 8), 3.0), 0.5)
    assert np.allclose(velocity_average(f).values, 3.0)
    f = KineticState.from_function(g, q, lambda x, y, th: np.cos(th) + 0 * x, 0.5)
    assert np.abs(velocity_average(f).values).max() < 1e-15
    f = KineticState.from_function(g, q, lambda x, y, th: np.cos(th) ** 2 + 0 * x, 0.5)
    assert np.abs(velocity_average(f).values - 0.5).max() < 1e-15


def test_lp_norm_examples():
    g = SpatialGrid.unit_square(127)
    one = ScalarField(g, np.ones(g.shape))
    assert lp_norm(one, 2) == pytest.approx(1.0, abs=3 * g.dx)
    assert lp_norm(ScalarField.zeros(g), 2) == 0.0
    s = g.sample(lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y))
    assert lp_norm(s, 2) ** 2 == pytest.approx(0.25, abs=1e-3)
    with pytest.raises(ValueError):
        lp_norm(s, 0.5)


def test_lp_norm_kinetic_uses_unnormalized_velocity_measure():
    g = SpatialGrid.unit_square(7)
    q = VelocityQuadrature(16)
    f = KineticState(g, q, np.ones((7, 7, 16)), 1.0)
    # int int 1 dx dv = |Omega_h| * 2 pi
    assert lp_norm(f, 2) ** 2 == pytest.approx(g.size * g.cell_volume * 2 * np.pi, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(
    c=st.floats(-1e3, 1e3, allow_nan=False).filter(lambda c: abs(c) > 1e-6),
    p=st.floats(1.0, 12.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_lp_norm_homogeneous(c, p, seed):
    g = SpatialGrid.unit_square(6)
    q = VelocityQuadrature(8)
    vals = np.random.default_rng(seed).standard_normal((6, 6, 8))
    f = KineticState(g, q, vals, 0.3)
    assert lp_norm(f.replace(c * vals), p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12)


def _uniform_trace(value, nv, T=1.0, steps=10):
    g = SpatialGrid.unit_square(15)
    q = VelocityQuadrature(nv)
    tr = TraceRecord(g, q)
    for _ in range(steps):
        tr.append(T / steps, np.full((len(g.boundary_faces), nv), value))
    return tr


def test_outflow_uniform_weighted():
    tr = _uniform_trace(1.0, 64)
    # perimeter 4 times int_{v.n>0} v.n dv = 2
    assert boundary_outflow_integral(tr, 2, weighted=True) == pytest.approx(8.0, rel=0.01)


def test_outflow_uniform_unweighted():
    c = 0.7
    tr = _uniform_trace(c, 64)
    assert boundary_outflow_integral(tr, 2, weighted=False) == pytest.approx(c * c * 4 * np.pi, rel=0.05)


def test_outflow_zero_and_bad_exponent():
    tr = _uniform_trace(0.0, 8)
    assert boundary_outflow_integral(tr, 2) == 0.0
    with pytest.raises(ValueError):
        boundary_outflow_integral(tr, 1.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), e1=st.floats(2.0, 8.0), de=st.floats(0.0, 4.0))
def test_outflow_monotone_in_exponent(seed, e1, de):
    g = SpatialGrid.unit_square(5)
    q = VelocityQuadrature(8)
    tr = TraceRecord(g, q)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        tr.append(0.1, rng.uniform(-1, 1, (len(g.boundary_faces), 8)))
    assert boundary_outflow_integral(tr, e1 + de) <= boundary_outflow_integral(tr, e1) * (1 + 1e-12)


def test_mask_examples():
    g = SpatialGrid.unit_square(63)
    assert subdomain_mask(g, Ball(0.5, 0.5, 3.0)).all()
    assert subdomain_mask(g, Rectangle(0, 1, 0, 1)).all()
    n = subdomain_mask(g, Ball(0.5, 0.5, 0.25)).sum()
    assert n == pytest.approx(np.pi * 0.25**2 / g.dx / g.dy, rel=0.02)
    with pytest.raises(ValueError):
        subdomain_mask(g, Ball(5.0, 5.0, 0.1))


@settings(max_examples=30, deadline=None)
@given(
    cx=st.floats(0.0, 1.0), cy=st.floats(0.0, 1.0), r=st.floats(0.1, 0.8), dr=st.floats(0.0, 0.5)
)
def test_mask_nested_balls(cx, cy, r, dr):
    g = SpatialGrid.unit_square(20)
    try:
        small = subdomain_mask(g, Ball(cx, cy, r))
    except ValueError:
        return
    big = subdomain_mask(g, Ball(cx, cy, r + dr))
    assert np.all(big[small])


def test_opacity_bounds():
    g = SpatialGrid.unit_square(9)
    a = OpacityField.from_function(g, lambda X, Y: 1 + X * Y)
    assert 0 < a.c_min <= a.nodes.min() and a.nodes.max() <= a.c_max
    with pytest.raises(ValueError):
        OpacityField.from_function(g, lambda X, Y: X - 0.5)


def test_state_rejects_bad_epsilon_and_nonfinite():
    g = SpatialGrid.unit_square(3)
    q = VelocityQuadrature(4)
    with pytest.raises(ValueError):
        KineticState(g, q, np.zeros((3, 3, 4)), 0.0)
    with pytest.raises(FloatingPointError):
        KineticState(g, q, np.full((3, 3, 4), math.nan), 0.5)
