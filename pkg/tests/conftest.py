import numpy as np
import pytest

from renewal_hj import (
    AssumptionBounds,
    EigenSolver,
    MutationKernel,
    TraitGrid,
    compactified_coefficients,
    constant_coefficients,
)

# Root of 2 (e^(l-1) - 1)/(l - 1) = 1 for A = d = 1, b = 2 on [0, 1], from
# mpmath.findroot at 30 digits.
LAMBDA_ETA1_CONSTANT = -0.5936242600400401


@pytest.fixture(scope="session")
def const_coeffs():
    return constant_coefficients(A=1.0, b=2.0, d=1.0, x_bar=1.0)


@pytest.fixture(scope="session")
def s2_coeffs():
    return compactified_coefficients(center=0.0, b0=2.5, d0=1.0, d2=0.5, x_bar=1.0)


@pytest.fixture(scope="session")
def s2_bounds():
    return AssumptionBounds(lambda_lower=-6.0, lambda_upper=-0.09, k0=1.0)


@pytest.fixture(scope="session")
def const_solver(const_coeffs):
    return EigenSolver(const_coeffs, AssumptionBounds(-6.0, -0.09))


@pytest.fixture(scope="session")
def s2_solver(s2_coeffs, s2_bounds):
    return EigenSolver(s2_coeffs, s2_bounds)


@pytest.fixture(scope="session")
def gaussian():
    return MutationKernel(kind="gaussian", sigma=0.5)


@pytest.fixture
def line_grid():
    return TraitGrid.from_spacing(-3.0, 3.0, 0.05)


def assert_close(a, b, tol):
    assert abs(a - b) <= tol, f"{a!r} vs {b!r} (tol {tol})"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
