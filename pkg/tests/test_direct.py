import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    DirectSolver,
    EigenSolver,
    MutationKernel,
    TraitGrid,
    compactified_coefficients,
    constant_coefficients,
    recover_corrector,
    step_m,
)
from renewal_hj.errors import CFLViolation

BOUNDS = AssumptionBounds(-6.0, -0.09, k0=1.0)


@pytest.fixture(scope="module")
def small_s2():
    coeffs = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.05)
    return DirectSolver(coeffs, MutationKernel(sigma=0.5), BOUNDS, trait, 0.2, dx=0.05,
                        n_birth=200)


def test_homogeneous_data_stay_homogeneous():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05, periodic=True)
    ds = DirectSolver(constant_coefficients(), MutationKernel(sigma=0.5), BOUNDS, trait, 0.1,
                      dx=0.05, n_birth=200)
    st, _ = ds.initial_state(np.zeros(trait.shape), np.ones(trait.shape))
    dt = ds.max_dt()
    for _ in range(40):
        st = step_m(st, ds, dt)
    spread = np.max(np.abs(st.m - st.m[:1]), axis=0) / np.max(st.m, axis=0)
    assert spread.max() <= 1e-12


def test_total_mass_respects_growth_bound(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    st, _ = ds.initial_state(-0.5 * y**2, np.ones(ds.trait.shape))
    r_bar = 2.5 - 1.0
    cap = max(r_bar, st.rho)
    dt = ds.max_dt()
    for _ in range(100):
        st = step_m(st, ds, dt)
        assert st.rho <= cap * (1 + 1e-12)
        assert np.all(st.m >= 0)


def test_single_trait_equilibrium():
    coeffs = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.single(0.3)
    ds = DirectSolver(coeffs, MutationKernel(kind="dirac"), BOUNDS, trait, 1.0, dx=0.025)
    run = ds.run(np.zeros(1), np.ones(1), 40.0, frame_dt=0.5)
    lam = EigenSolver(coeffs, BOUNDS).lam(np.array([0.3]), 1.0)
    assert run.frames[-1].rho == pytest.approx(-lam, abs=1e-3)


def test_corrector_recovered_at_time_zero(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    U0 = -0.5 * y**2
    st, p0 = ds.initial_state(U0, np.ones(ds.trait.shape))
    grid = recover_corrector(st, U0, ds.epsilon, ds.w_age)
    assert np.allclose(grid.p, p0, rtol=1e-13, atol=0)


def test_initial_corrector_is_gamma_times_Q(small_s2):
    ds = small_s2
    st, p0 = ds.initial_state(np.zeros(ds.trait.shape), np.full(ds.trait.shape, 2.0))
    # flat phase: eta0 = 1 everywhere, so p0(0, y) = 2 eta0 / A(0, y) = 2
    assert np.allclose(p0[..., 0], 2.0, rtol=1e-12)


def test_rho_integral_is_trapezoid_of_rho(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    run = ds.run(-0.5 * y**2, np.ones(ds.trait.shape), 0.2, frame_dt=0.05)
    rows = np.array([r[:3] for r in run.rows])
    t, rho, integ = rows.T
    trap = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (rho[1:] + rho[:-1]))])
    assert np.allclose(integ, trap, rtol=1e-12, atol=1e-15)


def test_run_is_deterministic(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    a = ds.run(-0.5 * y**2, np.ones(ds.trait.shape), 0.1, frame_dt=0.05)
    b = ds.run(-0.5 * y**2, np.ones(ds.trait.shape), 0.1, frame_dt=0.05)
    assert np.array_equal(a.frames[-1].m_birth, b.frames[-1].m_birth)
    assert a.rows == b.rows


def test_cfl_violation(small_s2):
    ds = small_s2
    st, _ = ds.initial_state(np.zeros(ds.trait.shape), np.ones(ds.trait.shape))
    with pytest.raises(CFLViolation):
        ds.step(st, 2 * ds.max_dt())


def test_substeps_below_unit_courant_number(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    st, _ = ds.initial_state(-0.5 * y**2, np.ones(ds.trait.shape))
    a = st
    for _ in range(10):
        a = ds.step(a, 0.5 * ds.max_dt())
    assert np.all(a.m >= 0)
    assert 0 < a.rho < 10


def test_inflow_matches_renewal_condition(small_s2):
    ds = small_s2
    y = ds.trait.axes[0]
    st, _ = ds.initial_state(-0.5 * y**2, np.ones(ds.trait.shape))
    st = ds.step(st, ds.max_dt())
    lhs = ds.A[..., 0] * st.m[..., 0]
    rhs = ds.births(st.m)
    assert np.allclose(lhs, rhs, rtol=1e-12)
