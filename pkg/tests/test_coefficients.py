import math

import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    CoefficientSet,
    GridSpec,
    InitialCondition,
    MutationKernel,
    TraitGrid,
    compactified_coefficients,
    constant_coefficients,
    kernel_exp_moment,
    validate_assumptions,
)
from renewal_hj.coefficients import lipschitz_concave
from renewal_hj.errors import AssumptionViolated


def _init():
    return InitialCondition(lipschitz_concave(), lambda y: np.ones(y.shape[:-1]), None, 1.0, 1.0)


def _grid(lo=-3.0, hi=3.0, dy=0.05):
    return GridSpec(TraitGrid.from_spacing(lo, hi, dy))


def test_compactified_example_passes_every_check(gaussian):
    coeffs = compactified_coefficients(center=0.0, b0=2.0, d0=1.0, d2=0.5)
    rep = validate_assumptions(coeffs, gaussian, AssumptionBounds(-6.0, -0.09), _init(), _grid(),
                               epsilons=[0.2, 0.1, 0.05])
    assert rep.passed, [c.name for c in rep.failures()]
    assert rep.constants["K_transport"] == pytest.approx(1.0, abs=1e-12)
    assert rep.constants["delta"] > 0


def test_zero_speed_is_rejected(gaussian):
    coeffs = constant_coefficients(A=0.0)
    with pytest.raises(AssumptionViolated) as exc:
        validate_assumptions(coeffs, gaussian, AssumptionBounds(-6.0, -0.09), _init(), _grid())
    assert exc.value.assumption == "A >= A_lower > 0"


def test_nonintegrable_speed_on_unbounded_support(gaussian):
    def fA(x, y):
        return 1.0 / (1.0 + np.broadcast_to(x, np.broadcast(x, y[..., 0]).shape))

    def fb(x, y):
        return np.full(np.broadcast(x, y[..., 0]).shape, 2.0)

    def fd(x, y):
        return np.full(np.broadcast(x, y[..., 0]).shape, 1.0)

    coeffs = CoefficientSet(fA, fb, fd, math.inf, 1, "custom", {})
    with pytest.raises(AssumptionViolated) as exc:
        validate_assumptions(coeffs, gaussian, AssumptionBounds(-6.0, -0.09), _init(), _grid())
    assert exc.value.assumption == "transport-in-finite-time"


def test_nonnegative_fitness_bound_is_rejected(gaussian):
    coeffs = constant_coefficients()
    with pytest.raises(AssumptionViolated) as exc:
        validate_assumptions(coeffs, gaussian, AssumptionBounds(-6.0, 0.1), _init(), _grid(),
                             strict=False)
    assert exc.value.assumption == "lambda_upper < 0"


def test_non_strict_report_lists_failures(gaussian):
    coeffs = constant_coefficients()
    init = InitialCondition(lambda y: -np.abs(y[..., 0]) - 1.0, lambda y: np.ones(y.shape[:-1]))
    rep = validate_assumptions(coeffs, gaussian, AssumptionBounds(-6.0, -0.09), init, _grid(),
                               strict=False)
    assert "sup U0 = 0" in [c.name for c in rep.failures()]


def test_exp_moment_at_zero_is_one(gaussian):
    assert kernel_exp_moment(gaussian, 0.0) == pytest.approx(1.0, abs=1e-13)


def test_gaussian_exp_moment_closed_form(gaussian):
    assert kernel_exp_moment(gaussian, 1.0) == pytest.approx(math.exp(0.125), rel=1e-12)
    assert kernel_exp_moment(gaussian, 3.0) == pytest.approx(math.exp(0.125 * 9), rel=1e-11)


def test_gaussian_exp_moment_two_dimensions():
    k = MutationKernel(kind="gaussian", n=2, sigma=(0.5, 0.3))
    p = np.array([1.0, -2.0])
    want = math.exp(0.5 * (0.25 * 1.0 + 0.09 * 4.0))
    assert kernel_exp_moment(k, p) == pytest.approx(want, rel=1e-11)


def test_even_kernel_has_zero_first_moment(gaussian):
    assert np.allclose(gaussian.first_moment(), 0.0, atol=1e-14)
    k = MutationKernel(kind="compact", profile="biweight", radius=0.8)
    assert np.allclose(k.first_moment(), 0.0, atol=1e-14)


def test_shifted_kernel_first_moment_is_mean():
    k = MutationKernel(kind="gaussian", sigma=0.5, mean=0.2)
    assert not k.is_even
    assert k.first_moment()[0] == pytest.approx(0.2, abs=1e-12)
    assert kernel_exp_moment(k, 1.0) == pytest.approx(math.exp(0.2 + 0.125), rel=1e-11)


def test_compact_kernel_is_normalized():
    k = MutationKernel(kind="compact", profile="epanechnikov", radius=1.0)
    nerr, _ = k.normalization_error()
    assert nerr < 1e-10


def test_unknown_kernel_kind():
    with pytest.raises(ValueError):
        MutationKernel(kind="cauchy")


def test_y_independence_flag():
    assert constant_coefficients().is_y_independent()
    assert compactified_coefficients(d2=0.0).is_y_independent()
    assert not compactified_coefficients(d2=0.5).is_y_independent()


def test_birth_vanishes_beyond_x_bar(s2_coeffs):
    x = np.array([0.0, 0.5, 1.0, 1.01, 3.0])
    _, b, _ = s2_coeffs.evaluate(x, np.zeros((1, 1)))
    assert np.all(b[:3] > 0) and np.all(b[3:] == 0)
