"""Exception hierarchy shared by every solver module."""


class RenewalHJError(Exception):
    """Base class for all package errors."""


class NonEvaluableField(RenewalHJError):
    """A coefficient or initial field returned a non-finite value."""


class AssumptionViolated(RenewalHJError):
    """A model assumption failed; ``assumption`` names it."""

    def __init__(self, assumption, detail="", report=None):
        self.assumption = assumption
        self.detail = detail
        self.report = report
        msg = assumption if not detail else f"{assumption}: {detail}"
        super().__init__(msg)


class MomentOverflow(RenewalHJError):
    """Exponential moment requested beyond the configured slope limit."""


class DivergentIntegral(RenewalHJError):
    """An improper age integral did not decay inside the age window."""


class OutOfBracket(RenewalHJError):
    """The renewal weight lies outside the admissible band for a trait."""


class DegenerateDerivative(RenewalHJError):
    """d/dlambda F collapsed below half its assumed lower bound."""


class PaddingExceeded(RenewalHJError):
    """The scaled kernel support leaves the padded trait box."""


class MonitorBreach(RenewalHJError):
    """Hard monitor failure (non-positive or non-finite renewal weight)."""


class CFLViolation(RenewalHJError):
    """Time step exceeds the transport stability limit."""


class NegativeDensity(RenewalHJError):
    """Scheme produced a negative density; indicates a bug."""


class ExpOverflow(RenewalHJError):
    """Factorization exponent too large; states are mismatched."""


class SingularHessian(RenewalHJError):
    """Hessian of U is (near) singular or lost negative definiteness."""


class OutOfDomain(RenewalHJError):
    """Trajectory left the trait box."""
