import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    EigenSolver,
    HJSolver,
    MutationKernel,
    TraitGrid,
    compactified_coefficients,
    compare_routes,
    hessian_at,
    integrate_canonical,
)
from renewal_hj.dynamics import CanonicalODE, HessianSeries, fitness_at, lyapunov_ok
from renewal_hj.errors import OutOfDomain, SingularHessian

BOUNDS = AssumptionBounds(-6.0, -0.09, k0=1.0)
EVEN = MutationKernel(sigma=0.5)


def _limit_run(center, t_final, dy=0.02, frame_dt=0.01, kernel=EVEN):
    coeffs = compactified_coefficients(center=center, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.from_spacing(-3.0, 3.0, dy)
    hs = HJSolver(coeffs, kernel, BOUNDS, trait, 0.0, k0=1.0)
    U0 = 1.0 - np.sqrt(1.0 + trait.axes[0] ** 2)
    solver = EigenSolver(coeffs, BOUNDS, dy=dy)
    return hs.run(U0, t_final, frame_dt=frame_dt), solver


def test_hessian_of_quadratic_is_minus_identity():
    trait = TraitGrid.from_spacing([-1.0, -1.0], [1.0, 1.0], 0.05)
    P = trait.mesh()
    U = -0.5 * np.sum(P**2, axis=-1)
    H = hessian_at(U, np.array([0.13, -0.27]), trait)
    assert np.allclose(H, -np.eye(2), atol=1e-10)


def test_hessian_of_linear_phase_is_singular():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05)
    with pytest.raises(SingularHessian):
        hessian_at(0.7 * trait.axes[0], np.array([0.0]), trait)


def test_hessian_from_hj_state():
    coeffs = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
    trait = TraitGrid.from_spacing(-1.5, 1.5, 0.05)
    hs = HJSolver(coeffs, EVEN, BOUNDS, trait, 0.0, k0=4.0)
    st = hs.initial_state(-(trait.axes[0] - 0.3) ** 2)
    H = hessian_at(st, np.array([0.3]))
    assert H[0, 0] == pytest.approx(-2.0, abs=10 * 0.05**2)


def test_hessian_near_boundary_is_out_of_domain():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05)
    with pytest.raises(OutOfDomain):
        hessian_at(-trait.axes[0] ** 2, np.array([0.98]), trait)


def test_even_kernel_has_no_drift():
    run, solver = _limit_run(0.0, 0.02)
    ode = CanonicalODE(HessianSeries(run), solver, EVEN)
    assert np.all(ode.drift == 0.0)


def test_shifted_kernel_drift_is_first_moment():
    k = MutationKernel(sigma=0.5, mean=0.1)
    run, solver = _limit_run(0.0, 0.02, kernel=k)
    ode = CanonicalODE(HessianSeries(run), solver, k)
    assert ode.drift[0] == pytest.approx(0.1, abs=1e-12)
    # at the stationary point of Lambda only the drift term moves ybar
    _, dlam, grad = fitness_at(solver, np.array([0.0]))
    assert abs(grad[0]) < 1e-9
    assert ode.velocity(0.0, np.array([0.0]))[0] == pytest.approx(dlam * 0.1, rel=1e-8)


def test_stationary_point_stays_put():
    run, solver = _limit_run(0.0, 0.1)
    traj = integrate_canonical(run, solver, EVEN, dt=0.005)
    assert traj.halt_reason == ""
    assert np.max(np.abs(traj.y_bar)) <= 1e-12


def test_symmetric_routes_coincide():
    run, solver = _limit_run(0.0, 0.1)
    traj = integrate_canonical(run, solver, EVEN, dt=0.005)
    rep = compare_routes(traj, run, solver)
    assert np.max(rep.argmax_gap) <= 1e-12


def test_trajectory_climbs_to_fitness_optimum():
    run, solver = _limit_run(0.5, 1.5, dy=0.02, frame_dt=0.02)
    traj = integrate_canonical(run, solver, EVEN, dt=0.01)
    assert traj.halt_reason == ""
    y = traj.y_bar[:, 0]
    assert np.all(np.diff(y) > 0) and y[-1] < 0.5 + 1e-9
    assert 0.5 - y[-1] < 0.5 - y[len(y) // 2] < 0.5
    assert lyapunov_ok(traj)
    assert np.allclose(traj.rho, -traj.lambda_at, atol=1e-15)


def test_asymmetric_argmax_follows_ode():
    run, solver = _limit_run(0.5, 0.5, dy=0.01)
    traj = integrate_canonical(run, solver, EVEN, dt=0.005)
    rep = compare_routes(traj, run, solver)
    assert np.max(rep.argmax_gap) <= 2 * 0.01


def test_rho_rate_formula_matches_difference():
    run, solver = _limit_run(0.5, 0.5, dy=0.01)
    traj = integrate_canonical(run, solver, EVEN, dt=0.005)
    rep = compare_routes(traj, run, solver)
    assert rep.drho_relative_gap <= 1e-2
