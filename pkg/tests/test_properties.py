import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from renewal_hj import (
    AssumptionBounds,
    EigenSolver,
    MutationKernel,
    TraitGrid,
    compactified_coefficients,
    sup_and_argmax,
)
from renewal_hj._quad import richardson_weights, simpson_weights

COEFFS = compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5)
SOLVER = EigenSolver(COEFFS, AssumptionBounds(-6.0, -0.09))


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0.1, 1.0), p=st.floats(-3.0, 3.0))
def test_gaussian_exp_moment(sigma, p):
    k = MutationKernel(sigma=sigma, p_max=4.0)
    assert math.isclose(float(k.exp_moment(np.array([p]))), math.exp(0.5 * sigma**2 * p**2),
                        rel_tol=1e-10)


@settings(max_examples=40, deadline=None)
@given(y=st.floats(-2.0, 2.0), lam=st.floats(-5.0, -0.1))
def test_lambda_round_trip(y, lam):
    yy = np.array([y])
    F = SOLVER.F(yy, lam)[0]
    assert abs(SOLVER.lam(yy, 1.0 / F) - lam) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(y=st.floats(-2.0, 2.0), f1=st.floats(0.05, 0.5), f2=st.floats(0.5, 0.95))
def test_lambda_decreasing_in_eta(y, f1, f2):
    yy = np.array([[y]])
    lo, hi = SOLVER.field(yy).eta_band()
    e1 = lo[0] + f1 * (hi[0] - lo[0])
    e2 = lo[0] + f2 * (hi[0] - lo[0])
    if e2 <= e1 * (1 + 1e-9):
        return
    assert SOLVER.lam(yy[0], e2) < SOLVER.lam(yy[0], e1)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-0.9, 0.9), top=st.floats(-5.0, 5.0), curv=st.floats(0.1, 10.0))
def test_argmax_exact_for_parabolas(c, top, curv):
    trait = TraitGrid.from_spacing(-1.0, 1.0, 0.05)
    U = top - curv * (trait.axes[0] - c) ** 2
    val, y, _ = sup_and_argmax(U, trait)
    assert abs(y[0] - c) <= 1e-9
    assert abs(val - top) <= 1e-9 * max(1.0, abs(top))


@settings(max_examples=30, deadline=None)
@given(coef=st.lists(st.floats(-3.0, 3.0), min_size=6, max_size=6), m=st.integers(1, 10))
def test_boole_weights_exact_for_quintics(coef, m):
    n = 4 * m + 1
    x = np.linspace(0.0, 1.0, n)
    f = np.polyval(coef, x)
    exact = sum(c / (5 - i + 1) for i, c in enumerate(coef))
    assert abs(richardson_weights(n, 1.0 / (n - 1)) @ f - exact) <= 1e-12 * (1 + abs(exact))


@given(m=st.integers(1, 50))
def test_simpson_weights_sum_to_length(m):
    n = 2 * m + 1
    assert abs(simpson_weights(n, 2.0 / (n - 1)).sum() - 2.0) <= 1e-13
