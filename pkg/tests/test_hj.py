import math

import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    HJSolver,
    TraitGrid,
    constant_coefficients,
    eta_eps,
    kernel_exp_moment,
    step_U_eps,
    step_U_limit,
    sup_and_argmax,
)
from renewal_hj.errors import CFLViolation
from renewal_hj.hj import eta_eps_field, limit_eta_field

BOUNDS = AssumptionBounds(-6.0, -0.09, k0=1.0)


def _solver(coeffs, kernel, trait, eps, **kw):
    return HJSolver(coeffs, kernel, BOUNDS, trait, eps, k0=1.0, **kw)


# -- renewal weight ------------------------------------------------------------


def test_eta_of_constant_phase_is_one(gaussian, line_grid):
    eta = eta_eps_field(np.full(line_grid.shape, -0.7), line_grid, gaussian, 0.1)
    assert np.allclose(eta, 1.0, atol=1e-13)


@pytest.mark.parametrize("p", [-1.5, 0.5, 2.0])
def test_eta_of_linear_phase_is_exp_moment(gaussian, line_grid, p):
    U = p * line_grid.axes[0]
    eta = eta_eps_field(U, line_grid, gaussian, 0.1)
    assert np.allclose(eta, kernel_exp_moment(gaussian, p), rtol=1e-12)


def test_eta_at_single_node(gaussian, line_grid, s2_coeffs):
    solver = _solver(s2_coeffs, gaussian, line_grid, 0.1)
    st = solver.initial_state(0.5 * line_grid.axes[0])
    assert eta_eps(st, gaussian, 10) == pytest.approx(kernel_exp_moment(gaussian, 0.5), rel=1e-12)


def test_eta_converges_to_limit_as_eps_halves(gaussian):
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.005)
    y = trait.axes[0]
    U = -0.5 * y**2
    lim = limit_eta_field(U, trait, gaussian)
    win = np.abs(y) <= 1.0
    errs = []
    for eps in (0.2, 0.1, 0.05):
        errs.append(float(np.max(np.abs(eta_eps_field(U, trait, gaussian, eps) - lim)[win])))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / errs[1] < 0.6


# -- argmax ----------------------------------------------------------------------


def test_argmax_of_parabola():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05)
    U = -(trait.axes[0] - 0.3) ** 2
    val, y, mult = sup_and_argmax(U, trait)
    assert abs(y[0] - 0.3) <= 2.5e-3
    assert val == pytest.approx(0.0, abs=1e-12)
    assert mult == 1


def test_argmax_off_node_parabola():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05)
    U = 0.2 - (trait.axes[0] - 0.3123) ** 2
    val, y, _ = sup_and_argmax(U, trait)
    assert y[0] == pytest.approx(0.3123, abs=1e-12)
    assert val == pytest.approx(0.2, abs=1e-12)


def test_argmax_of_constant_is_leftmost():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.1)
    val, y, mult = sup_and_argmax(np.zeros(trait.shape), trait)
    assert y[0] == -1.0 and val == 0.0 and mult == trait.size


def test_argmax_tie_reports_leftmost():
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.1)
    U = -np.minimum((trait.axes[0] + 0.5) ** 2, (trait.axes[0] - 0.5) ** 2)
    val, y, mult = sup_and_argmax(U, trait)
    assert mult == 2
    assert y[0] == pytest.approx(-0.5, abs=1e-12)


def test_argmax_two_dimensions():
    trait = TraitGrid.from_spacing([-1.0, -1.0], [1.0, 1.0], 0.05)
    P = trait.mesh()
    U = -((P[..., 0] - 0.21) ** 2) - 2 * (P[..., 1] + 0.37) ** 2
    _, y, _ = sup_and_argmax(U, trait)
    assert np.allclose(y, [0.21, -0.37], atol=1e-12)


# -- time stepping -------------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.0, 0.1])
def test_y_independent_flat_phase_moves_at_minus_lambda(gaussian, eps):
    coeffs = constant_coefficients()
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05, periodic=True)
    solver = _solver(coeffs, gaussian, trait, eps)
    lam1 = solver.eigen.lam(np.array([0.0]), 1.0)
    st = solver.initial_state(np.full(trait.shape, 0.25))
    step = step_U_limit if eps == 0 else step_U_eps
    for _ in range(20):
        st = step(st, solver, 0.01)
    assert np.allclose(st.U, 0.25 - lam1 * 0.2, atol=1e-12, rtol=0)


def test_rate_stays_in_fitness_bracket(s2_coeffs, gaussian):
    trait = TraitGrid.from_spacing(-4.0, 4.0, 0.02)
    solver = _solver(s2_coeffs, gaussian, trait, 0.1)
    st = solver.initial_state(-0.5 * trait.axes[0] ** 2)
    dt = solver.stable_dt(st)
    lo, hi = -BOUNDS.lambda_upper, -BOUNDS.lambda_lower
    for _ in range(30):
        prev = st.U
        st = step_U_eps(st, solver, dt)
        rate = (st.U - prev) / dt
        assert rate.min() >= lo * (1 - 1e-6) and rate.max() <= hi * (1 + 1e-6)
    assert st.monitors.bracket_excess <= 1e-6 * dt


def test_time_step_self_convergence(s2_coeffs, gaussian):
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.05)
    solver = _solver(s2_coeffs, gaussian, trait, 0.1)
    U0 = -0.5 * trait.axes[0] ** 2
    dt = 0.5 * solver.stable_dt(solver.initial_state(U0))
    T = 40 * dt

    def run(h):
        st = solver.initial_state(U0)
        for _ in range(int(round(T / h))):
            st = step_U_eps(st, solver, h)
        return st.U

    ref = run(dt / 4)
    e1 = np.max(np.abs(run(dt) - ref))
    e2 = np.max(np.abs(run(dt / 2) - ref))
    assert e2 < e1 and e1 / e2 > 1.6


def test_limit_keeps_even_phase_even(s2_coeffs, gaussian):
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.05)
    solver = _solver(s2_coeffs, gaussian, trait, 0.0)
    run = solver.run(-0.5 * trait.axes[0] ** 2, 0.2, frame_dt=0.05)
    for f in run.frames:
        assert np.max(np.abs(f.U - f.U[::-1])) <= 1e-12


def test_cfl_violation_is_raised(s2_coeffs, gaussian):
    trait = TraitGrid.from_spacing(-3.0, 3.0, 0.05)
    solver = _solver(s2_coeffs, gaussian, trait, 0.0)
    st = solver.initial_state(-0.5 * trait.axes[0] ** 2)
    with pytest.raises(CFLViolation):
        solver.step(st, 100 * solver.stable_dt(st))


def test_wrong_epsilon_for_stepper(s2_coeffs, gaussian, line_grid):
    solver = _solver(s2_coeffs, gaussian, line_grid, 0.0)
    st = solver.initial_state(np.zeros(line_grid.shape))
    with pytest.raises(ValueError):
        step_U_eps(st, solver, 0.001)


def test_run_records_frames_and_monitors(s2_coeffs, gaussian):
    trait = TraitGrid.from_spacing(-4.0, 4.0, 0.05)
    solver = _solver(s2_coeffs, gaussian, trait, 0.2, lipschitz_growth=40.0)
    run = solver.run(-0.5 * trait.axes[0] ** 2, 0.3, frame_dt=0.1)
    assert [round(f.t, 12) for f in run.frames] == [0.0, 0.1, 0.2, 0.3]
    assert run.halt_reason == ""
    assert run.monitors.hard_breaches == 0
    assert run.frame_at(0.2).U.shape == trait.shape
    # sup U follows int rho and so grows at rate between the fitness bounds
    sups = [sup_and_argmax(f.U, trait)[0] for f in run.frames]
    assert all(b > a for a, b in zip(sups, sups[1:]))
    assert math.isfinite(run.monitors.eta_tv_accum)
