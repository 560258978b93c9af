import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    DirectSolver,
    HJSolver,
    MutationKernel,
    TraitGrid,
    check_gamma_bounds,
    compactified_coefficients,
    constant_coefficients,
    solve_gamma,
)
from renewal_hj.corrector import bracket_constant, envelopes

BOUNDS = AssumptionBounds(-6.0, -0.09, k0=1.0)
KERNEL = MutationKernel(sigma=0.5)


@pytest.fixture(scope="module")
def paired_runs():
    coeffs = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.05)
    U0 = -np.sqrt(1.0 + trait.axes[0] ** 2) + 1.0
    eps = 0.2
    hs = HJSolver(coeffs, KERNEL, BOUNDS, trait, eps, k0=1.0, lipschitz_growth=40.0)
    h = hs.run(U0, 0.2, frame_dt=0.05)
    ds = DirectSolver(coeffs, KERNEL, BOUNDS, trait, eps, dx=0.05, n_birth=200)
    d = ds.run(U0, np.ones(trait.shape), 0.2, frame_dt=0.05)
    return ds, d, h


def test_bracket_at_time_zero_is_initial_bracket(paired_runs):
    ds, d, h = paired_runs
    diag = check_gamma_bounds(ds, d, h, h.monitors.eta_tv_accum, 1.0, 1.0, 3.0)
    assert diag.times[0] == 0.0
    assert diag.gamma_min[0] >= 1.0 - 1e-12
    assert diag.gamma_max[0] <= 1.0 + 1e-12


def test_bracket_inside_theory(paired_runs):
    ds, d, h = paired_runs
    fl = ds.eigen.field(ds.ys)
    lo, _ = fl.eta_band()
    K = bracket_constant(float(lo.min()), fl.max_abs_dlam(), 1.0)
    diag = check_gamma_bounds(ds, d, h, h.monitors.eta_tv_accum, 1.0, 1.0, K,
                              tv_sup=h.monitors.eta_dt_accum)
    assert diag.inside_theory
    assert diag.x_integral_range[0] > 0
    assert diag.envelope_violation <= 0


def test_envelopes_are_ordered(paired_runs):
    ds, _, _ = paired_runs
    lo, hi = envelopes(ds, 0.5, 2.0, 0.8, 1.5, BOUNDS)
    assert lo.shape == hi.shape == ds.trait.shape + (len(ds.x),)
    assert np.all(lo <= hi) and np.all(lo > 0)


def test_gamma_constant_for_homogeneous_scenario():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05, periodic=True)
    hs = HJSolver(constant_coefficients(), KERNEL, BOUNDS, trait, 0.0, k0=1.0)
    run = hs.run(np.zeros(trait.shape), 0.3, frame_dt=0.05)
    g = solve_gamma(hs, run, np.full(trait.shape, 1.7))
    for frame in g.gamma:
        assert np.allclose(frame, 1.7, rtol=1e-13)
    assert g.saturation_time is None


def test_gamma_constant_at_symmetric_concentration_point():
    coeffs = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.from_spacing(-4.0, 4.0, 0.02)
    hs = HJSolver(coeffs, KERNEL, BOUNDS, trait, 0.0, k0=1.0)
    U0 = -np.sqrt(1.0 + trait.axes[0] ** 2) + 1.0
    run = hs.run(U0, 0.3, frame_dt=0.01)
    g = solve_gamma(hs, run, np.ones(trait.shape))
    i0 = trait.nearest_index(np.array([0.0]))
    dl = np.array([hs.field.solve(f.eta.ravel(), clamp=True).dlambda_deta[i0] for f in run.frames])
    vals = np.sqrt(-dl) * np.array([gg[i0] for gg in g.gamma])
    assert np.max(np.abs(vals - vals[0])) <= 1e-4
