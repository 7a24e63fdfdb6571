import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlab.grid import KineticState, OpacityField, ScalarField, SpatialGrid, VelocityQuadrature, lp_norm
from kinlab.harness.data import bump_field
from kinlab.kinetic import (
    CFLViolation,
    KineticRunConfig,
    Splitting,
    compute_first_moment,
    max_stable_dt,
    read_snapshot,
    run_kinetic,
    transport_step,
    write_snapshot,
)
from kinlab.scattering import RelaxationMethod, ScatteringKind


def _bump_state(n=15, nv=8, eps=0.5, radius=0.25):
    g = SpatialGrid.unit_square(n)
    return KineticState.isotropic(bump_field(g, radius), VelocityQuadrature(nv), eps)


def test_zero_state_stays_zero():
    f = _bump_state()
    f = f.replace(np.zeros_like(f.values))
    assert np.all(transport_step(f, max_stable_dt(f)).state.values == 0)
    rec = run_kinetic(KineticRunConfig(0.05), f, OpacityField.constant(f.grid, 1.0))
    assert rec.energy[-1] == 0 and rec.anisotropy_l2 == 0
    assert all(np.all(av.values == 0) for av in rec.averages)


def test_cfl_violation_is_refused():
    f = _bump_state()
    with pytest.raises(CFLViolation, match="stable limit"):
        transport_step(f, 1.01 * max_stable_dt(f))


def test_single_ordinate_translates_right():
    g = SpatialGrid.unit_square(31)
    q = VelocityQuadrature(4)  # theta = 0 is ordinate 0
    vals = np.zeros((31, 31, 4))
    vals[5:9, 12:18, 0] = 1.0
    f = KineticState(g, q, vals, 0.5)
    m0 = vals[..., 0].sum()
    x0 = (vals[..., 0].sum(axis=1) * g.x).sum() / m0
    dt = max_stable_dt(f)
    for _ in range(10):
        f = transport_step(f, dt).state
    x1 = (f.values[..., 0].sum(axis=1) * g.x).sum() / f.values[..., 0].sum()
    assert x1 - x0 == pytest.approx(10 * dt / 0.5, rel=1e-10)
    assert f.values[..., 0].sum() <= m0 * (1 + 1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.05, 1.0))
def test_upwind_is_l2_stable(seed, frac):
    g = SpatialGrid.unit_square(8)
    q = VelocityQuadrature(4)
    f = KineticState(g, q, np.random.default_rng(seed).standard_normal((8, 8, 4)), 0.3)
    new = transport_step(f, frac * max_stable_dt(f)).state
    assert lp_norm(new, 2) <= lp_norm(f, 2) * (1 + 1e-13)


def test_first_moment_examples():
    g = SpatialGrid.unit_square(5)
    q = VelocityQuadrature(4)
    gx = g.sample(lambda X, Y: X * (1 - Y))
    m1, m2 = compute_first_moment(KineticState.isotropic(gx, q, 0.5))
    assert np.abs(m1.values).max() < 1e-15 and np.abs(m2.values).max() < 1e-15
    f = KineticState.from_function(g, q, lambda x, y, th: np.cos(th) * x * (1 - y), 0.5)
    m1, m2 = compute_first_moment(f)
    assert np.allclose(m1.values, gx.values / 2, atol=1e-15)
    assert np.abs(m2.values).max() < 1e-15


@pytest.mark.parametrize("kind", list(ScatteringKind))
@pytest.mark.parametrize("splitting", list(Splitting))
def test_energy_and_mass_balance(kind, splitting):
    f0 = _bump_state(eps=0.2, radius=0.4)
    a = OpacityField.from_function(f0.grid, lambda X, Y: 1 + 0.5 * X)
    rec = run_kinetic(KineticRunConfig(0.1, kind, splitting, n_snapshots=3), f0, a)
    e = np.asarray(rec.energy)
    assert np.all(np.diff(e) <= 1e-14 * e[0])
    assert np.abs(rec.mass_balance_residuals()).max() <= 1e-12 * rec.mass[0]
    assert rec.snapshot_times == pytest.approx([0, 1 / 30, 2 / 30, 0.1], abs=1e-15)
    assert len(rec.averages) == 4


def test_mass_conserved_before_reaching_the_boundary():
    f0 = _bump_state(n=31, eps=1.0, radius=0.2)
    a = OpacityField.constant(f0.grid, 1.0)
    # support ends 0.3 from the boundary; speed 1/eps = 1 with upwind smearing
    rec = run_kinetic(KineticRunConfig(0.02), f0, a)
    assert abs(rec.mass[-1] - rec.mass[0]) <= 1e-12 * rec.mass[0]


@pytest.mark.parametrize("kind", list(ScatteringKind))
def test_anisotropy_bound_small_grid(kind):
    for eps in (0.4, 0.1):
        f0 = _bump_state(n=15, nv=16, eps=eps, radius=0.35)
        a = OpacityField.constant(f0.grid, 1.0)
        rec = run_kinetic(KineticRunConfig(0.1, kind), f0, a)
        assert rec.anisotropy_l2 <= eps * lp_norm(f0, 2) / math.sqrt(2 * a.c_min) * 1.05


def test_backward_euler_fokker_planck_available():
    f0 = _bump_state(eps=0.2)
    a = OpacityField.constant(f0.grid, 1.0)
    cfg = KineticRunConfig(0.05, ScatteringKind.FOKKER_PLANCK, relaxation=RelaxationMethod.BACKWARD_EULER)
    rec = run_kinetic(cfg, f0, a)
    assert np.all(np.diff(rec.energy) <= 1e-14 * rec.energy[0])


def test_config_validation():
    with pytest.raises(ValueError):
        KineticRunConfig(0.0)
    with pytest.raises(ValueError):
        KineticRunConfig(1.0, cfl=1.5)


def test_snapshot_roundtrip(tmp_path):
    f = _bump_state(n=5, nv=4)
    path = tmp_path / "snap.bin"
    write_snapshot(path, f, step=17, flags=3)
    raw = path.read_bytes()
    assert len(raw) == 40 + 8 * f.values.size
    assert list(np.frombuffer(raw[:40], "<i8")) == [5, 5, 4, 17, 3]
    vals, step, flags = read_snapshot(path)
    assert step == 17 and flags == 3
    assert np.array_equal(vals, f.values)
