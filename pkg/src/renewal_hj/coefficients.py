"""Model ingredients: coefficient fields, mutation kernels, assumption
constants, initial data, and the assumption validator.

Coefficient fields are vectorized callables ``f(x, y)`` where ``x`` broadcasts
against ``y[..., 0]`` and ``y`` carries the trait components on its last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from . import _quad
from .errors import AssumptionViolated, MomentOverflow, NonEvaluableField
from .grid import TraitGrid

QUAD_TOL = 1e-10
TAIL_TOL = 1e-12


def _psi(v):
    """Smooth diffeomorphism from R^n onto the open unit ball."""
    return v / np.sqrt(1.0 + np.sum(v * v, axis=-1, keepdims=True))


@dataclass(frozen=True)
class CoefficientSet:
    """Aging speed ``A``, birth rate ``b`` and death rate ``d``.

    ``x_bar`` is the right end of the birth support (``inf`` when ``b`` never
    vanishes).
    """

    A: Callable
    b: Callable
    d: Callable
    x_bar: float
    n: int = 1
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def evaluate(self, x, y):
        """Return ``(A, b, d)`` broadcast over ``x`` and ``y``."""
        y = np.asarray(y, dtype=float)
        out = []
        for label, f in (("A", self.A), ("b", self.b), ("d", self.d)):
            v = np.asarray(f(np.asarray(x, dtype=float), y), dtype=float)
            if not np.all(np.isfinite(v)):
                raise NonEvaluableField(f"{label} returned non-finite values")
            out.append(v)
        return tuple(np.broadcast_arrays(*out))

    def is_y_independent(self):
        return self.params.get("y_independent", False)


def constant_coefficients(A=1.0, b=2.0, d=1.0, x_bar=1.0, n=1):
    """Constant rates with birth restricted to ``[0, x_bar]``."""

    def fA(x, y):
        return np.full(np.broadcast(x, y[..., 0]).shape, float(A))

    def fb(x, y):
        x = np.broadcast_to(x, np.broadcast(x, y[..., 0]).shape)
        return np.where(x <= x_bar, float(b), 0.0)

    def fd(x, y):
        return np.full(np.broadcast(x, y[..., 0]).shape, float(d))

    params = dict(kind="constant", A=A, b=b, d=d, x_bar=x_bar, y_independent=True)
    return CoefficientSet(fA, fb, fd, float(x_bar), n, "constant", params)


def compactified_coefficients(
    n=1,
    center=0.0,
    a0=1.0,
    a_age=0.0,
    a2=0.0,
    b0=2.0,
    b2=0.0,
    d0=1.0,
    d1=0.0,
    d2=0.0,
    d_age=0.0,
    x_bar=1.0,
):
    """Coefficients depending on the trait only through ``s = psi(y - center)``.

    A = (a0 + a_age x)(1 + a2 |s|^2), b = (b0 + b2 |s|^2) 1_{x <= x_bar},
    d = d0 + d1 . s + d2 |s|^2 + d_age x.
    """
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (n,))
    d1v = np.broadcast_to(np.atleast_1d(np.asarray(d1, dtype=float)), (n,))

    def s_of(y):
        return _psi(np.asarray(y, dtype=float) - c)

    def fA(x, y):
        s2 = np.sum(s_of(y) ** 2, axis=-1)
        return (a0 + a_age * x) * (1.0 + a2 * s2)

    def fb(x, y):
        s2 = np.sum(s_of(y) ** 2, axis=-1)
        val = (b0 + b2 * s2) + 0.0 * x
        return np.where(x <= x_bar, val, 0.0)

    def fd(x, y):
        s = s_of(y)
        return d0 + s @ d1v + d2 * np.sum(s * s, axis=-1) + d_age * x

    params = dict(
        kind="compactified", center=c.tolist(), a0=a0, a_age=a_age, a2=a2, b0=b0,
        b2=b2, d0=d0, d1=d1v.tolist(), d2=d2, d_age=d_age, x_bar=x_bar,
        y_independent=(a2 == 0 and b2 == 0 and not np.any(d1v) and d2 == 0),
    )
    return CoefficientSet(fA, fb, fd, float(x_bar), n, "compactified", params)


def tabulated_coefficients(x, y_axes, A, b, d):
    """Coefficients sampled on a grid, linearly interpolated.

    Outside the table, ``A`` and ``d`` hold their edge values and ``b`` is 0
    beyond the last age node.
    """
    x = np.asarray(x, dtype=float)
    y_axes = [np.asarray(a, dtype=float) for a in y_axes]
    n = len(y_axes)
    grid = (x, *y_axes)
    interp = {}
    for label, table in (("A", A), ("b", b), ("d", d)):
        table = np.asarray(table, dtype=float)
        interp[label] = RegularGridInterpolator(grid, table, bounds_error=False, fill_value=None)
    lows = np.array([g[0] for g in grid])
    highs = np.array([g[-1] for g in grid])

    def make(label):
        f = interp[label]

        def field_(xx, yy):
            xx, yy0 = np.broadcast_arrays(xx, yy[..., 0])
            shape = xx.shape
            yy = np.broadcast_to(yy, shape + (n,))
            pts = np.concatenate([xx[..., None], yy], axis=-1).reshape(-1, n + 1)
            clipped = np.clip(pts, lows, highs)
            v = f(clipped).reshape(shape)
            if label == "b":
                v = np.where(xx > x[-1], 0.0, np.maximum(v, 0.0))
            return v

        return field_

    b_arr = np.asarray(b, dtype=float)
    pos = np.nonzero(np.any(b_arr.reshape(len(x), -1) > 0, axis=1))[0]
    if len(pos) == 0:
        x_bar = 0.0
    elif pos[-1] == len(x) - 1:
        x_bar = math.inf
    else:
        x_bar = float(x[pos[-1] + 1])
    params = dict(kind="tabulated")
    return CoefficientSet(make("A"), make("b"), make("d"), x_bar, n, "tabulated", params)


COEFFICIENT_REGISTRY = {
    "constant": constant_coefficients,
    "compactified": compactified_coefficients,
}


def coefficients_from_config(cfg, n=1, base_dir=None):
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "tabulated":
        from pathlib import Path

        path = Path(cfg["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data = np.load(path)
        y_axes = [data[f"y{i}"] for i in range(n)]
        return tabulated_coefficients(data["x"], y_axes, data["A"], data["b"], data["d"])
    if kind not in COEFFICIENT_REGISTRY:
        raise KeyError(f"unknown coefficient kind {kind!r}")
    return COEFFICIENT_REGISTRY[kind](n=n, **cfg)


# ---------------------------------------------------------------------------
# mutation kernel


_PROFILES = {
    "epanechnikov": lambda r: np.clip(1.0 - r * r, 0.0, None),
    "biweight": lambda r: np.clip(1.0 - r * r, 0.0, None) ** 2,
    "bump": lambda r: np.where(np.abs(r) < 1.0, np.exp(-1.0 / np.clip(1.0 - r * r, 1e-300, None)), 0.0),
}


@dataclass(frozen=True)
class MutationKernel:
    """Separable thin-tailed probability kernel ``M`` on R^n.

    ``kind`` is ``gaussian`` (per-axis ``sigma``), ``compact`` (per-axis
    ``profile`` on ``[-radius, radius]``) or ``dirac`` (no mutation). ``mean``
    shifts the kernel and produces a drift. ``p_max`` is the largest slope for
    which exponential moments are requested; the truncation radius is chosen
    so that ``M(z) exp(p_max |z|) < tail_tol`` outside it.
    """

    kind: str = "gaussian"
    n: int = 1
    sigma: tuple = (0.5,)
    mean: tuple = (0.0,)
    profile: str = "biweight"
    radius: tuple = (1.0,)
    p_max: float = 4.0
    tail_tol: float = TAIL_TOL
    nodes_per_scale: int = 8

    def __post_init__(self):
        for name in ("sigma", "mean", "radius"):
            v = tuple(float(s) for s in np.broadcast_to(np.atleast_1d(getattr(self, name)), (self.n,)))
            object.__setattr__(self, name, v)
        if self.kind not in ("gaussian", "compact", "dirac"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "compact" and self.profile not in _PROFILES:
            raise ValueError(f"unknown compact profile {self.profile!r}")

    def with_slope_limit(self, p_max):
        return replace(self, p_max=float(p_max))

    @property
    def is_even(self):
        return not any(self.mean)

    @property
    def scale(self):
        """Characteristic width (sigma or support radius)."""
        if self.kind == "gaussian":
            return max(self.sigma)
        if self.kind == "compact":
            return max(self.radius)
        return 0.0

    def truncation_radius(self):
        """Per-axis half width of the quadrature window around the mean."""
        if self.kind == "dirac":
            return (0.0,) * self.n
        if self.kind == "compact":
            return self.radius
        out = []
        k = self.p_max
        for s, mu in zip(self.sigma, self.mean):
            c = math.log(1.0 / (self.tail_tol * s * math.sqrt(2 * math.pi))) + k * abs(mu)
            out.append(s * s * k + s * math.sqrt(s * s * k * k + 2.0 * c))
        return tuple(out)

    def _axis_rule(self, i, refine=1):
        mu = self.mean[i]
        if self.kind == "gaussian":
            s = self.sigma[i]
            R = self.truncation_radius()[i]
            m = int(math.ceil(2 * R / (s / self.nodes_per_scale))) * refine
            m += m % 2
            z = np.linspace(-R, R, m + 1)
            dens = np.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2 * math.pi))
            w = _quad.simpson_weights(m + 1, 2 * R / m) * dens
        else:
            r0 = self.radius[i]
            m = 16 * self.nodes_per_scale * refine
            z = np.linspace(-r0, r0, m + 1)
            dens = _PROFILES[self.profile](z / r0)
            w = _quad.simpson_weights(m + 1, 2 * r0 / m) * dens
            w = w / w.sum()
        keep = w > 0
        return z[keep] + mu, w[keep]

    @cached_property
    def quadrature(self):
        """Nodes ``(K, n)`` and weights ``(K,)`` with ``sum w f(z) ~ int M f``."""
        if self.kind == "dirac":
            return np.zeros((1, self.n)), np.ones(1)
        rules = [self._axis_rule(i) for i in range(self.n)]
        zs = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        ws = np.meshgrid(*[r[1] for r in rules], indexing="ij")
        nodes = np.stack([z.ravel() for z in zs], axis=-1)
        weights = np.prod(np.stack([w.ravel() for w in ws], axis=-1), axis=-1)
        return nodes, weights

    def density(self, z):
        """Kernel density ``M(z)`` for ``z`` of shape ``(..., n)``."""
        z = np.asarray(z, dtype=float)
        out = np.ones(z.shape[:-1])
        for i in range(self.n):
            u = z[..., i] - self.mean[i]
            if self.kind == "gaussian":
                s = self.sigma[i]
                out = out * np.exp(-0.5 * (u / s) ** 2) / (s * math.sqrt(2 * math.pi))
            elif self.kind == "compact":
                r0 = self.radius[i]
                _, norm = self._profile_norm(i)
                out = out * _PROFILES[self.profile](u / r0) / norm
            else:
                raise ValueError("dirac kernel has no density")
        return out

    def _profile_norm(self, i):
        r0 = self.radius[i]
        val, err = _quad.simpson_richardson(lambda z: _PROFILES[self.profile](z / r0), -r0, r0, 4096)
        return err, val

    def normalization_error(self):
        """|sum of weights - 1| and Richardson estimate of the quadrature error."""
        _, w = self.quadrature
        if self.kind == "dirac":
            return 0.0, 0.0
        err = abs(w.sum() - 1.0)
        rich = 0.0
        if self.kind == "compact":
            for i in range(self.n):
                e, _ = self._profile_norm(i)
                rich = max(rich, e)
        else:
            fine = [self._axis_rule(i, refine=2)[1].sum() for i in range(self.n)]
            rich = abs(float(np.prod(fine)) - w.sum()) / 15.0
        return err, rich

    def _check_slope(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.n:
            p = p[..., None] if self.n == 1 else p
        norms = np.sqrt(np.sum(p * p, axis=-1))
        if np.any(norms > self.p_max * (1 + 1e-12)):
            raise MomentOverflow(f"|p| = {norms.max():.6g} exceeds p_max = {self.p_max:.6g}")
        return p

    def exp_moment(self, p):
        """``int M(z) exp(p.z) dz`` for ``p`` of shape ``(..., n)``."""
        p = self._check_slope(p)
        z, w = self.quadrature
        return np.exp(p @ z.T) @ w

    def exp_moment_grad(self, p):
        """``int M(z) z exp(p.z) dz``, shape ``(..., n)``."""
        p = self._check_slope(p)
        z, w = self.quadrature
        return np.exp(p @ z.T) @ (w[:, None] * z)

    def moments(self, p):
        """``(m(p), grad m(p))``; closed form for Gaussian kernels."""
        p = self._check_slope(p)
        if self.kind == "gaussian":
            s2 = np.asarray(self.sigma) ** 2
            mu = np.asarray(self.mean)
            m = np.exp(p @ mu + 0.5 * (p * p) @ s2)
            return m, (mu + s2 * p) * m[..., None]
        if self.kind == "dirac":
            return np.ones(p.shape[:-1]), np.zeros(p.shape)
        return self.exp_moment(p), self.exp_moment_grad(p)

    def first_moment(self):
        """``int M(z) z dz``; exactly zero for even kernels rather than quadrature noise."""
        if self.kind == "dirac" or self.is_even:
            return np.zeros(self.n)
        if self.kind == "gaussian":
            return np.array(self.mean)
        z, w = self.quadrature
        return w @ z

    def exp_moment_exact(self, p):
        """Closed form for the Gaussian kernel (test oracle)."""
        if self.kind != "gaussian":
            raise ValueError("closed form only for gaussian kernels")
        p = np.asarray(p, dtype=float)
        s = np.asarray(self.sigma)
        mu = np.asarray(self.mean)
        return np.exp(p @ mu + 0.5 * (p * p) @ (s * s))

    def slope_range(self, eta_max):
        """Largest |p| along each axis direction with exp moment <= eta_max."""
        out = []
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = 1.0
            best = 0.0
            for sign in (1.0, -1.0):
                lo, hi = 0.0, self.p_max
                if self.exp_moment(sign * hi * e) <= eta_max:
                    best = max(best, hi)
                    continue
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if self.exp_moment(sign * mid * e) <= eta_max:
                        lo = mid
                    else:
                        hi = mid
                best = max(best, lo)
            out.append(best)
        return np.array(out)


def kernel_from_config(cfg, n=1):
    cfg = dict(cfg)
    kind = cfg.pop("kind", "gaussian")
    return MutationKernel(kind=kind, n=n, **cfg)


def kernel_exp_moment(kernel, p):
    """Exponential moment of ``kernel`` at slope ``p`` by quadrature."""
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0 or (p.ndim == 1 and kernel.n > 1 and p.shape[0] == kernel.n)
    if p.ndim == 0:
        p = p.reshape(1)
    val = kernel.exp_moment(p)
    return float(val) if scalar or np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# assumption constants and initial data


@dataclass(frozen=True)
class AssumptionBounds:
    """Fitness bracket and the constants derived from it.

    Only ``lambda_lower``/``lambda_upper`` are required; the rest may be left
    ``None`` and are measured by :func:`validate_assumptions`.
    """

    lambda_lower: float
    lambda_upper: float
    eta_lower: float | None = None
    eta_upper: float | None = None
    k0: float | None = None
    l_F: float | None = None
    L_F: float | None = None
    delta: float | None = None


@dataclass(frozen=True)
class InitialCondition:
    """Initial phase ``U0``, corrector weight ``gamma0`` and optional ``p0``.

    When ``p0`` is ``None`` the corrector is built as ``gamma0(y) Q(x, y,
    eta0_eps(y))``.
    """

    U0: Callable
    gamma0: Callable
    p0: Callable | None = None
    gamma0_lower: float | None = None
    gamma0_upper: float | None = None
    params: dict = field(default_factory=dict, compare=False)


def lipschitz_concave(center=0.0, slope=1.0, width=1.0, n=1):
    """``U0 = -slope*width*(sqrt(1 + |y-c|^2/width^2) - 1)``: Lipschitz, max 0."""
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (n,))

    def U0(y):
        r2 = np.sum((np.asarray(y, dtype=float) - c) ** 2, axis=-1) / width**2
        return -slope * width * (np.sqrt(1.0 + r2) - 1.0)

    return U0


def quadratic_well(center=0.0, curvature=1.0, n=1):
    """``U0 = -curvature |y - c|^2 / 2``."""
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (n,))

    def U0(y):
        return -0.5 * curvature * np.sum((np.asarray(y, dtype=float) - c) ** 2, axis=-1)

    return U0


def gamma_profile(level=1.0, amplitude=0.0, center=0.0, n=1):
    """``gamma0 = level (1 + amplitude |psi(y - c)|^2)``."""
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (n,))

    def g(y):
        s = _psi(np.asarray(y, dtype=float) - c)
        return level * (1.0 + amplitude * np.sum(s * s, axis=-1))

    return g


_U0_REGISTRY = {"lipschitz-concave": lipschitz_concave, "quadratic": quadratic_well}


def initial_from_config(cfg, n=1):
    cfg = dict(cfg)
    u_kind = cfg.pop("U0", "lipschitz-concave")
    u_args = {k[3:]: v for k, v in cfg.items() if k.startswith("U0_")}
    g_args = {k[7:]: v for k, v in cfg.items() if k.startswith("gamma0_") and k not in ("gamma0_lower", "gamma0_upper")}
    U0 = _U0_REGISTRY[u_kind](n=n, **u_args)
    g0 = gamma_profile(n=n, **g_args)
    return InitialCondition(
        U0, g0, None, cfg.get("gamma0_lower"), cfg.get("gamma0_upper"),
        params=dict(U0=u_kind, **{f"U0_{k}": v for k, v in u_args.items()}),
    )


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class GridSpec:
    """Sampling and discretization parameters of a scenario."""

    trait: TraitGrid
    dx: float = 0.025
    n_birth: int = 400
    dy_limit: float | None = None
    x_cap_factor: float = 50.0


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    value: float
    worst_point: tuple | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    constants: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value,
                 "worst_point": None if c.worst_point is None else list(c.worst_point),
                 "detail": c.detail}
                for c in self.checks
            ],
            "constants": dict(self.constants),
        }


HARD_ASSUMPTIONS = ("A >= A_lower > 0", "lambda_upper < 0")


def _sample_ages(coeffs, grid):
    if math.isfinite(coeffs.x_bar) and coeffs.x_bar > 0:
        top = coeffs.x_bar * 3.0
        h = coeffs.x_bar / grid.n_birth
    else:
        top = 50.0
        h = grid.dx
    return np.arange(int(round(top / h)) + 1) * h


def validate_assumptions(coeffs, kernel, bounds, init, grid, epsilons=(), t_final=1.0, strict=True):
    """Check every model assumption on the sampled grid.

    Each check records its measured constant and the sample achieving the
    worst margin. ``lambda_upper >= 0`` or a non-positive aging speed always
    raise :class:`AssumptionViolated`; any other failure raises only when
    ``strict``.
    """
    from .eigen import EigenSolver

    checks = []
    consts = {}
    ys = grid.trait.points()
    xs = _sample_ages(coeffs, grid)
    X, Y = xs[None, :], ys[:, None, :]
    A, b, d = coeffs.evaluate(X, Y)

    def add(name, passed, value, idx=None, detail=""):
        wp = None
        if idx is not None:
            iy, ix = np.unravel_index(idx, A.shape)
            wp = (float(xs[ix]), *[float(v) for v in ys[iy]])
        checks.append(AssumptionCheck(name, bool(passed), float(value), wp, detail))

    def report():
        return ValidationReport(checks, consts)

    a_lower = float(A.min())
    consts["A_lower"] = a_lower
    add("A >= A_lower > 0", a_lower > 0, a_lower, int(A.argmin()))
    if a_lower <= 0:
        raise AssumptionViolated("A >= A_lower > 0", f"min A = {a_lower:.6g}", report())
    add("b >= 0", b.min() >= 0, float(b.min()), int(b.argmin()))
    add("d >= 0", d.min() >= 0, float(d.min()), int(d.argmin()))

    if bounds.lambda_upper >= 0:
        add("lambda_upper < 0", False, bounds.lambda_upper)
        raise AssumptionViolated("lambda_upper < 0", f"lambda_upper = {bounds.lambda_upper}", report())
    add("lambda_upper < 0", True, bounds.lambda_upper)
    add("lambda_lower <= lambda_upper", bounds.lambda_lower <= bounds.lambda_upper, bounds.lambda_lower)

    # birth support and transport through it
    x_bar = coeffs.x_bar
    beyond = xs[None, :] > x_bar
    leak = float(np.max(np.where(beyond, b, 0.0))) if np.isfinite(x_bar) else 0.0
    add("b = 0 beyond x_bar", leak == 0.0, leak)
    if np.isfinite(x_bar):
        nb = grid.n_birth
        xb = np.linspace(0.0, x_bar, nb + 1)
        Ab = coeffs.evaluate(xb[None, :], Y)[0]
        K = float(np.max(trapezoid(1.0 / Ab, xb, axis=1)) if nb % 2 else
                  np.max((1.0 / Ab) @ _quad.simpson_weights(nb + 1, x_bar / nb)))
        consts["K_transport"] = K
        add("transport-in-finite-time", np.isfinite(K), K)
    else:
        x1 = np.arange(0.0, 50.0 + 1e-12, grid.dx)
        x2 = np.arange(0.0, 100.0 + 1e-12, grid.dx)
        i1 = trapezoid(1.0 / coeffs.evaluate(x1[None, :], Y)[0], x1, axis=1)
        i2 = trapezoid(1.0 / coeffs.evaluate(x2[None, :], Y)[0], x2, axis=1)
        growth = float(np.max(i2 - i1))
        K = float(np.max(i2))
        consts["K_transport"] = K
        ok = growth <= 1e-3 * max(K, 1.0)
        add("transport-in-finite-time", ok, growth,
            detail="1/A not integrable on the unbounded birth support" if not ok else "")
        if not ok and strict:
            raise AssumptionViolated("transport-in-finite-time", "integral of 1/A keeps growing", report())

    # kernel
    nerr, rich = kernel.normalization_error()
    consts["kernel_normalization_error"] = nerr
    add("kernel normalization", nerr <= QUAD_TOL and rich <= QUAD_TOL, max(nerr, rich))
    try:
        edge = np.full(kernel.n, kernel.p_max / math.sqrt(kernel.n))
        val = kernel.exp_moment(edge)
        add("kernel thin-tailed", np.isfinite(val), float(val))
    except (FloatingPointError, OverflowError) as exc:
        add("kernel thin-tailed", False, math.inf, detail=str(exc))

    # eigen-level assumptions
    solver = EigenSolver(coeffs, bounds, n_birth=grid.n_birth, x_cap_factor=grid.x_cap_factor)
    fld = solver.field(ys)
    Fu, dFu, _ = fld.F_all(np.full(len(ys), bounds.lambda_upper))
    finite = bool(np.all(np.isfinite(Fu)) and np.all(np.isfinite(dFu)))
    add("F(y, lambda_upper) finite", finite and fld.tail_ok, float(np.max(Fu)),
        detail="" if fld.tail_ok else "integrand tail not decayed inside age window")

    lam_samples = np.linspace(bounds.lambda_lower, bounds.lambda_upper, 33)
    dF = np.stack([fld.F_all(np.full(len(ys), lam))[1] for lam in lam_samples])
    l_meas, L_meas = float(dF.min()), float(dF.max())
    consts["l_F"], consts["L_F"] = l_meas, L_meas
    iw = np.unravel_index(int(dF.argmin()), dF.shape)
    ok = l_meas > 0
    if bounds.l_F is not None:
        ok = ok and bounds.l_F <= l_meas
    if bounds.L_F is not None:
        ok = ok and L_meas <= bounds.L_F
    checks.append(AssumptionCheck("l_F <= dF/dlambda <= L_F", ok, l_meas,
                                  (float(lam_samples[iw[0]]), *map(float, ys[iw[1]]))))

    eta_lo, eta_hi = fld.eta_band()
    consts["eta_lower"] = float(eta_lo.min())
    consts["eta_upper"] = float(eta_hi.max())
    ok = True
    if bounds.eta_lower is not None:
        ok = ok and bounds.eta_lower <= eta_lo.min()
    if bounds.eta_upper is not None:
        ok = ok and eta_hi.max() <= bounds.eta_upper
    add("eta_lower <= eta band <= eta_upper", ok, float(eta_lo.min()))

    # concavity margin on the band
    margins = []
    for frac in np.linspace(0.02, 0.98, 17):
        eta = eta_lo + frac * (eta_hi - eta_lo)
        margins.append(fld.solve(eta).concavity_margin)
    margins = np.stack(margins)
    delta = -float(margins.max())
    consts["delta"] = delta
    add("concavity margin delta > 0", delta > 0 and (bounds.delta is None or delta >= bounds.delta), delta)

    # initial data
    U0 = np.asarray(init.U0(grid.trait.mesh()), dtype=float)
    if not np.all(np.isfinite(U0)):
        raise NonEvaluableField("U0 returned non-finite values")
    top = float(U0.max())
    tol = 0.5 * max(grid.trait.spacing) ** 2 * _max_abs_second_difference(U0, grid.trait)
    add("sup U0 = 0", abs(top) <= max(tol, 1e-12), top)
    k0 = _max_slope(U0, grid.trait)
    consts["k0_measured"] = k0
    ok = bounds.k0 is None or k0 <= bounds.k0 * (1 + 1e-9)
    add("|grad U0| <= k0", ok, k0)
    consts["semiconvexity_C"] = max(0.0, -_min_second_difference(U0, grid.trait))

    from .hj import eta_eps_field, limit_eta_field

    eta_sets = {"limit": limit_eta_field(U0, grid.trait, kernel)}
    for eps in epsilons:
        eta_sets[f"eps={eps:g}"] = eta_eps_field(U0, grid.trait, kernel, eps)
    worst = math.inf
    where = None
    for label, eta0 in eta_sets.items():
        flat = eta0.ravel()
        margin = np.minimum(flat - eta_lo, eta_hi - flat)
        i = int(margin.argmin())
        if margin[i] < worst:
            worst, where = float(margin[i]), (label, i)
    add("eta0 within band", worst >= 0, worst,
        detail=f"{where[0]} at node {where[1]}" if where else "")

    g0 = np.asarray(init.gamma0(grid.trait.mesh()), dtype=float).ravel()
    if init.p0 is not None:
        ratios = []
        for label, eta0 in eta_sets.items():
            if label == "limit":
                continue
            sol = fld.solve(np.clip(eta0.ravel(), eta_lo, eta_hi))
            Q = solver.Q_on(xs, ys, eta0.ravel(), sol.lam)
            ratios.append(init.p0(X, Y) / Q)
        g0 = np.concatenate([r.ravel() for r in ratios]) if ratios else g0
    g_lo, g_hi = float(g0.min()), float(g0.max())
    consts["gamma0_lower"], consts["gamma0_upper"] = g_lo, g_hi
    ok = g_lo > 0
    if init.gamma0_lower is not None:
        ok = ok and g_lo >= init.gamma0_lower
    if init.gamma0_upper is not None:
        ok = ok and g_hi <= init.gamma0_upper
    add("gamma0 bracket", ok, g_lo)

    J = []
    for eps in epsilons:
        J.append(float(np.sum(np.exp(U0 / eps)) * grid.trait.cell_volume))
    if J:
        consts["J0_lower"], consts["J0_upper"] = min(J), max(J)
        add("initial integrability", min(J) > 0 and np.isfinite(max(J)), min(J))

    consts["lipschitz_growth"] = L_meas / (l_meas * consts["eta_lower"] ** 2)
    consts["k_truncation"] = k0 + consts["lipschitz_growth"] * t_final

    rep = report()
    if strict and not rep.passed:
        first = rep.failures()[0]
        raise AssumptionViolated(first.name, first.detail or f"measured {first.value:.6g}", rep)
    return rep


def _max_slope(U, trait):
    out = 0.0
    for ax, h in enumerate(trait.spacing):
        if U.shape[ax] > 1:
            out = max(out, float(np.max(np.abs(np.diff(U, axis=ax))) / h))
    return out


def _second_differences(U, trait):
    res = []
    for ax, h in enumerate(trait.spacing):
        if U.shape[ax] > 2:
            res.append(np.diff(U, n=2, axis=ax) / h**2)
    return res


def _min_second_difference(U, trait):
    dd = _second_differences(U, trait)
    return float(min(x.min() for x in dd)) if dd else 0.0


def _max_abs_second_difference(U, trait):
    dd = _second_differences(U, trait)
    return float(max(np.abs(x).max() for x in dd)) if dd else 0.0
