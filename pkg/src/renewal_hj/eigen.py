"""Effective fitness Lambda(y, eta), eigenprofile Q and dual profile Phi.

With G(x) = int_0^x 1/A and D(x) = int_0^x d/A the defining integral reads

    F(y, lam) = int (b/A) exp(lam G - D) dx,

so on a fixed age grid F, dF/dlam and d2F/dlam2 are weighted sums of
exp(lam G), G exp(lam G) and G^2 exp(lam G). All root finding below works on
those sums and is vectorized over trait nodes.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import _quad
from .coefficients import AssumptionBounds
from .errors import DegenerateDerivative, DivergentIntegral, OutOfBracket

LOG_TAIL = math.log(1e-14)
ROOT_TOL = 1e-12
BAND_SLACK = 1e-12
SCAN_NODES = 2000


@dataclass(frozen=True)
class EigenBundle:
    """Eigen elements at one ``(y, eta)``.

    ``x`` is the profile grid on ``[0, X_max]``; ``i_bar`` indexes ``x_bar`` on
    it (the whole grid when births are unbounded in age).
    """

    y: np.ndarray
    eta: float
    lam: float
    x: np.ndarray
    q_profile: np.ndarray
    phi_profile: np.ndarray
    dlambda_deta: float
    grad_y_lambda: np.ndarray
    d2lambda_deta2: float
    F: float
    F_lam: float
    F_lamlam: float
    i_bar: int

    @property
    def concavity_margin(self):
        return self.d2lambda_deta2 + self.dlambda_deta / self.eta


@dataclass
class _AgeData:
    """Per-node age integrals on a uniform age grid (rows are trait nodes)."""

    x: np.ndarray
    h: float
    A: np.ndarray
    b: np.ndarray
    d: np.ndarray
    G: np.ndarray
    D: np.ndarray


@dataclass
class FieldSolution:
    """Vectorized eigenvalue solution over a set of trait nodes."""

    eta: np.ndarray
    lam: np.ndarray
    F_lam: np.ndarray
    F_lamlam: np.ndarray
    clamped: np.ndarray

    @property
    def dlambda_deta(self):
        return -1.0 / (self.eta**2 * self.F_lam)

    @property
    def d2lambda_deta2(self):
        e, fl = self.eta, self.F_lam
        return 2.0 / (e**3 * fl) - self.F_lamlam / (e**4 * fl**3)

    @property
    def concavity_margin(self):
        return self.d2lambda_deta2 + self.dlambda_deta / self.eta


CACHE_SIZE = 256


def _lru(cache, key, make):
    if key in cache:
        cache.move_to_end(key)
        return cache[key]
    value = cache[key] = make()
    if len(cache) > CACHE_SIZE:
        cache.popitem(last=False)
    return value


class EigenSolver:
    """Eigen computations for one coefficient set.

    ``bounds`` supplies the root bracket ``[lambda_lower, lambda_upper]``;
    without it the bracket is found by expansion per query. ``dy`` is the
    central-difference step for trait gradients.
    """

    def __init__(self, coeffs, bounds=None, n_birth=400, x_cap_factor=50.0, dy=1e-3,
                 l_F=None):
        self.coeffs = coeffs
        self.bounds = bounds
        self.n_birth = int(n_birth) + int(n_birth) % 2
        self.x_cap_factor = float(x_cap_factor)
        self.dy = float(dy)
        self.l_F = l_F if l_F is not None else (bounds.l_F if bounds is not None else None)
        if math.isfinite(coeffs.x_bar) and coeffs.x_bar > 0:
            self.h = coeffs.x_bar / self.n_birth
            self.x_cap = self.x_cap_factor * coeffs.x_bar
        else:
            self.h = 0.01
            self.x_cap = self.x_cap_factor
        self._memo = OrderedDict()
        self._fields = OrderedDict()

    # -- age data -----------------------------------------------------------

    def _age_data(self, ys, n_int):
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        x = self.h * np.arange(n_int + 1)
        A, b, d = self.coeffs.evaluate(x[None, :], ys[:, None, :])
        Ainv = 1.0 / A
        G = _quad.cumulative(Ainv, self.h)
        D = _quad.cumulative(d * Ainv, self.h)
        return _AgeData(x, self.h, A, b, d, G, D)

    @property
    def finite_support(self):
        return math.isfinite(self.coeffs.x_bar) and self.coeffs.x_bar > 0

    def _lam_ref(self):
        if self.bounds is not None:
            return self.bounds.lambda_upper
        return -1e-3

    def profile_length(self, ys, lam_ref=None):
        """Even interval count of ``[0, X_max]`` covering every node in ``ys``."""
        lam_ref = self._lam_ref() if lam_ref is None else lam_ref
        n_cap = int(math.ceil(self.x_cap / self.h))
        n_cap += n_cap % 2
        # scan on a coarser grid (at most SCAN_NODES ages); the cut moves by
        # at most one coarse cell, which is added as margin
        stride = max(1, n_cap // SCAN_NODES)
        hc = stride * self.h
        nc = int(math.ceil(n_cap / stride))
        xc = hc * np.arange(nc + 1)
        A, _, d = self.coeffs.evaluate(xc[None, :], np.atleast_2d(ys)[:, None, :])
        G = _quad.cumulative(1.0 / A, hc)
        D = _quad.cumulative(d / A, hc)
        expo = lam_ref * G - D
        below = np.all(expo < LOG_TAIL, axis=0)
        hits = np.nonzero(below)[0]
        if len(hits) == 0:
            n = n_cap
            tail_ok = False
        else:
            n = min(n_cap, (int(hits[0]) + 1) * stride)
            tail_ok = True
        n += n % 2
        if self.finite_support:
            n = max(n, self.n_birth)
        return max(n, 2), tail_ok

    def birth_length(self, ys):
        if self.finite_support:
            return self.n_birth, True
        return self.profile_length(ys)

    # -- F and root finding ---------------------------------------------------

    def field(self, ys, n_gauss=None):
        """Vectorized solver over trait nodes ``ys`` (cached per node set).

        With ``n_gauss`` the birth integral uses Gauss-Legendre nodes on
        ``[0, x_bar]`` instead of the Simpson grid; this is the cheap variant
        used inside time loops.
        """
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        key = (ys.tobytes(), n_gauss)
        return _lru(self._fields, key, lambda: LambdaField(self, ys, n_gauss))

    def F(self, y, lam):
        """``(F, dF/dlam, d2F/dlam2)`` at one trait and fitness value."""
        fl = self.field(np.atleast_2d(y))
        F, Fl, Fll = fl.F_all(np.array([float(lam)]))
        if not fl.tail_ok and lam > self._lam_ref():
            raise DivergentIntegral(f"F integrand does not decay for lam = {lam}")
        return float(F[0]), float(Fl[0]), float(Fll[0])

    def lam(self, y, eta):
        fl = self.field(np.atleast_2d(y))
        return float(fl.solve(np.array([float(eta)])).lam[0])

    # -- bundles ---------------------------------------------------------------

    def bundle(self, y, eta, with_gradient=True):
        """Full :class:`EigenBundle` at ``(y, eta)`` with exact ``eta``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        fl = self.field(y[None, :])
        sol = fl.solve(np.array([float(eta)]))
        lam = float(sol.lam[0])
        eta = float(eta)
        Fl, Fll = float(sol.F_lam[0]), float(sol.F_lamlam[0])
        if self.l_F is not None and Fl < 0.5 * self.l_F:
            raise DegenerateDerivative(f"dF/dlam = {Fl:.6g} below l_F/2 at y = {y}")
        dlam = -1.0 / (eta**2 * Fl)
        d2lam = 2.0 / (eta**3 * Fl) - Fll / (eta**4 * Fl**3)

        grad = np.zeros_like(y)
        if with_gradient and not self.coeffs.params.get("y_independent", False):
            for i in range(len(y)):
                e = np.zeros_like(y)
                e[i] = self.dy
                fp = self.field((y + e)[None, :]).F_all(np.array([lam]))[0][0]
                fm = self.field((y - e)[None, :]).F_all(np.array([lam]))[0][0]
                grad[i] = -((fp - fm) / (2 * self.dy)) / Fl

        x, Q, Phi, ib = self.profiles(y, eta, lam, dlam)
        F = float(fl.F_all(np.array([lam]))[0][0])
        return EigenBundle(y, eta, lam, x, Q, Phi, dlam, grad, d2lam, F, Fl, Fll, ib)

    def bundle_at(self, y, eta):
        """Memoized bundle keyed by ``(y, eta)`` with ``eta`` quantized to 1e-6."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        q = round(float(eta) * 1e6) / 1e6
        key = (y.tobytes(), q)
        return _lru(self._memo, key, lambda: self.bundle(y, q))

    def profiles(self, y, eta, lam, dlam):
        """Q on ``[0, X_max]`` and Phi (zero beyond ``x_bar``)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        n_prof, _ = self.profile_length(y[None, :])
        nb, _ = self.birth_length(y[None, :])
        n_prof = max(n_prof, nb)
        data = self._age_data(y[None, :], n_prof)
        expo = lam * data.G[0] - data.D[0]
        Q = eta / data.A[0] * np.exp(expo)
        Phi = np.zeros_like(Q)
        sl = slice(0, nb + 1)
        integrand = data.b[0, sl] / data.A[0, sl] * np.exp(expo[sl])
        R = _quad.reverse_cumulative(integrand, data.h)
        Phi[sl] = -dlam * eta * np.exp(-expo[sl]) * R
        return data.x, Q, Phi, nb

    def Q_on(self, xs, ys, eta, lam):
        """Q(x, y, eta(y)) on a uniform age grid ``xs`` with spacing ``h``."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        n = len(xs) - 1
        if abs(xs[1] - xs[0] - self.h) > 1e-12 * self.h:
            raise ValueError("age grid spacing must match the solver spacing")
        data = self._age_data(ys, n)
        eta = np.asarray(eta, dtype=float).reshape(-1, 1)
        lam = np.asarray(lam, dtype=float).reshape(-1, 1)
        return eta / data.A * np.exp(lam * data.G - data.D)

    def integrals(self, bundle):
        """``(int bQ, int Q, int dQ, int Q Phi)`` with the solver's quadrature."""
        y = bundle.y
        n = len(bundle.x) - 1
        data = self._age_data(y[None, :], n)
        w = _quad.simpson_weights(n + 1, data.h)
        nb = bundle.i_bar
        wb = _quad.simpson_weights(nb + 1, data.h)
        Q = bundle.q_profile
        ibq = float(wb @ (data.b[0, : nb + 1] * Q[: nb + 1]))
        iq = float(w @ Q)
        idq = float(w @ (data.d[0] * Q))
        iqphi = float(wb @ (Q[: nb + 1] * bundle.phi_profile[: nb + 1]))
        return ibq, iq, idq, iqphi

    def alternative_lambda(self, bundle):
        """Fitness from the integrated eigen equation: int (d - eta b) Q / int Q."""
        ibq, iq, idq, _ = self.integrals(bundle)
        return (idq - bundle.eta * ibq) / iq

    def dphi_deta(self, y, eta, rel_step=1e-4):
        """Centered difference of Phi in eta on the birth grid."""
        h = rel_step * eta
        bp = self.bundle(y, eta + h, with_gradient=False)
        bm = self.bundle(y, eta - h, with_gradient=False)
        nb = bp.i_bar
        return (bp.phi_profile[: nb + 1] - bm.phi_profile[: nb + 1]) / (2 * h)


def _gauss_birth(coeffs, ys, n):
    """Weights ``(b/A) e^{-D}`` and ``G`` at Gauss-Legendre nodes of ``[0, x_bar]``.

    ``G`` and ``D`` at each node come from a nested rule on ``[0, x_k]``.
    """
    t, wt = np.polynomial.legendre.leggauss(n)
    xb = coeffs.x_bar
    xk = 0.5 * xb * (t + 1.0)
    wk = 0.5 * xb * wt
    inner = xk[:, None] * 0.5 * (t[None, :] + 1.0)
    Y = ys[:, None, None, :]
    A_in, _, d_in = coeffs.evaluate(inner[None, :, :], Y)
    G = (1.0 / A_in) @ (0.5 * wt) * xk
    D = (d_in / A_in) @ (0.5 * wt) * xk
    A, b, _ = coeffs.evaluate(xk[None, :], ys[:, None, :])
    return wk * b / A * np.exp(-D), G


class LambdaField:
    """Root finding for ``F(y, lam) = 1/eta`` at a fixed set of trait nodes.

    The last solution is reused as the starting point of the next solve, so a
    time loop typically needs two Newton iterations per step.
    """

    def __init__(self, solver, ys, n_gauss=None):
        self.solver = solver
        self.ys = ys
        if n_gauss and solver.finite_support:
            self.tail_ok = True
            self.w, self.G = _gauss_birth(solver.coeffs, ys, n_gauss)
        else:
            nb, self.tail_ok = solver.birth_length(ys)
            data = solver._age_data(ys, nb)
            self.G = data.G
            wq = _quad.richardson_weights(nb + 1, data.h)
            self.w = wq * data.b / data.A * np.exp(-data.D)
        self._lam = None
        self._band = None

    def _bracket(self):
        b = self.solver.bounds
        if b is not None:
            return b.lambda_lower, b.lambda_upper
        return None

    def F_all(self, lam):
        lam = np.asarray(lam, dtype=float).reshape(-1, 1)
        e = self.w * np.exp(lam * self.G)
        F = e.sum(axis=1)
        eg = e * self.G
        Fl = eg.sum(axis=1)
        Fll = (eg * self.G).sum(axis=1)
        return F, Fl, Fll

    def eta_band(self):
        """``(eta_lower(y), eta_upper(y)) = (1/F(y, lam_upper), 1/F(y, lam_lower))``."""
        if self._band is None:
            br = self._bracket()
            if br is None:
                raise ValueError("eta band needs lambda bounds")
            lo = 1.0 / self.F_all(np.full(len(self.ys), br[1]))[0]
            hi = 1.0 / self.F_all(np.full(len(self.ys), br[0]))[0]
            self._band = (lo, hi)
        return self._band

    def max_abs_dlam(self, n_samples=33):
        """Largest ``|d Lambda/d eta|`` over the admissible band."""
        lo, hi = self.eta_band()
        best = 0.0
        for frac in np.linspace(0.0, 1.0, n_samples):
            eta = lo + frac * (hi - lo)
            lam = self.solve(eta).lam
            Fl = self.F_all(lam)[1]
            best = max(best, float(np.max(1.0 / (eta**2 * Fl))))
        return best

    def _expand_bracket(self, target):
        lo = np.full(target.shape, -1.0)
        hi = np.full(target.shape, -1.0)
        for _ in range(200):
            f = np.log(self.F_all(lo)[0])
            bad = ~(f < target)
            if not bad.any():
                break
            lo = np.where(bad, 2 * lo - 1.0, lo)
        for _ in range(200):
            with np.errstate(over="ignore"):
                f = np.log(self.F_all(hi)[0])
            bad = ~(f > target)
            if not bad.any():
                break
            hi = np.where(bad, hi + np.abs(hi) + 1.0, hi)
        if not self.tail_ok and np.any(hi > 0):
            raise DivergentIntegral("root lies where the F integrand does not decay")
        return lo, hi

    def solve(self, eta, clamp=False, warm=False):
        """Solve for every node; ``eta`` outside the band raises unless ``clamp``.

        ``warm`` starts Newton from the previous solution. That is only for a
        caller owning the field (a time loop); the last bits of the result then
        depend on the call history.
        """
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (len(self.ys),)).copy()
        clamped = np.zeros(eta.shape, dtype=bool)
        br = self._bracket()
        if br is not None:
            lo_b, hi_b = self.eta_band()
            below = eta < lo_b * (1 - BAND_SLACK)
            above = eta > hi_b * (1 + BAND_SLACK)
            if (below.any() or above.any()) and not clamp:
                i = int(np.argmax(below | above))
                raise OutOfBracket(
                    f"eta = {eta[i]:.12g} outside [{lo_b[i]:.12g}, {hi_b[i]:.12g}] at y = {self.ys[i]}"
                )
            clamped = below | above
            eta = np.clip(eta, lo_b, hi_b)
            lo = np.full(eta.shape, br[0])
            hi = np.full(eta.shape, br[1])
        target = -np.log(eta)
        if br is None:
            lo, hi = self._expand_bracket(target)

        if warm and self._lam is not None and self._lam.shape == eta.shape:
            lam = np.clip(self._lam, lo, hi)
        else:
            lam = 0.5 * (lo + hi)
        for _ in range(200):
            F, Fl, _ = self.F_all(lam)
            g = np.log(F) - target
            lo = np.where(g < 0, lam, lo)
            hi = np.where(g > 0, lam, hi)
            new = lam - g * F / Fl
            bad = ~np.isfinite(new) | (new < lo) | (new > hi)
            new = np.where(bad, 0.5 * (lo + hi), new)
            step = np.abs(new - lam)
            lam = new
            if np.all((step <= 1e-15 * (1.0 + np.abs(lam))) | (hi - lo <= 1e-15)):
                break
        F, Fl, Fll = self.F_all(lam)
        self._lam = lam.copy()
        return FieldSolution(eta, lam, Fl, Fll, clamped)


# ---------------------------------------------------------------------------
# functional interface


def _solver(coeffs, bounds=None, solver=None):
    if solver is not None:
        return solver
    return EigenSolver(coeffs, bounds)


def compute_F(coeffs, y, lam, solver=None):
    """``int (b/A) exp(int_0^x (lam - d)/A) dx`` at one trait."""
    return _solver(coeffs, solver=solver).F(y, lam)[0]


def compute_lambda(coeffs, y, eta, bounds=None, solver=None):
    """Unique root of ``F(y, .) = 1/eta``."""
    return _solver(coeffs, bounds, solver).lam(y, eta)


def compute_Q(coeffs, y, eta, lam=None, bounds=None, solver=None):
    """``(x, Q)`` with ``Q = eta/A exp(int_0^x (lam - d)/A)``."""
    s = _solver(coeffs, bounds, solver)
    if lam is None:
        lam = s.lam(y, eta)
    F, Fl, _ = s.F(y, lam)
    x, Q, _, _ = s.profiles(y, eta, lam, -1.0 / (eta**2 * Fl))
    return x, Q


def compute_Phi(coeffs, y, eta, lam=None, bounds=None, solver=None):
    """``(x, Phi)``, the dual profile normalized by ``int Q Phi = 1``."""
    s = _solver(coeffs, bounds, solver)
    if lam is None:
        lam = s.lam(y, eta)
    F, Fl, _ = s.F(y, lam)
    x, _, Phi, _ = s.profiles(y, eta, lam, -1.0 / (eta**2 * Fl))
    return x, Phi


def lambda_derivatives(coeffs, y, eta, bounds=None, solver=None):
    """``(dLambda/deta, grad_y Lambda, d2Lambda/deta2)``."""
    b = _solver(coeffs, bounds, solver).bundle(y, eta)
    return b.dlambda_deta, b.grad_y_lambda, b.d2lambda_deta2


def concavity_margin(coeffs, y, eta, bounds=None, solver=None):
    """``d2Lambda/deta2 + (dLambda/deta)/eta``; negative under the model assumptions."""
    return _solver(coeffs, bounds, solver).bundle(y, eta, with_gradient=False).concavity_margin


def eigen_table(solver, ys, etas):
    """Rows ``(y..., eta, Lambda, dLambda/deta, grad_y Lambda..., margin)``."""
    rows = []
    for y in np.atleast_2d(ys):
        for eta in etas:
            b = solver.bundle(y, eta)
            rows.append([*y, eta, b.lam, b.dlambda_deta, *b.grad_y_lambda, b.concavity_margin])
    return np.array(rows)


def default_bounds_for(solver, ys, eta_lo, eta_hi):
    """Fitness bracket ``[Lambda(eta_hi), Lambda(eta_lo)]`` over ``ys`` (helper for configs)."""
    fl = solver.field(ys)
    lam_hi = fl.solve(np.full(len(ys), eta_lo)).lam.max()
    lam_lo = fl.solve(np.full(len(ys), eta_hi)).lam.min()
    return AssumptionBounds(float(lam_lo), float(lam_hi))


@dataclass(frozen=True)
class IdentityResiduals:
    """Defects of the eigen and dual identities at one ``(y, eta)``.

    ``dual_slope_literal`` compares ``int Q d_eta Phi`` with
    ``-d2Lambda/(2 dLambda)``; ``dual_slope_corrected`` compares it with
    ``+d2Lambda/(2 dLambda)``, the value forced by differentiating
    ``int Q Phi = 1`` (see the decisions ledger).
    """

    y: tuple
    eta: float
    lam: float
    implicit: float
    dlambda_fd_rel: float
    alternative: float
    phi0: float
    q_phi: float
    q_dphi: float
    dual_slope_literal: float
    dual_slope_corrected: float
    margin: float
    cauchy_schwarz: float


def identity_residuals(solver, y, eta, fd_step=1e-4):
    """All pointwise eigen identities at ``(y, eta)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    b = solver.bundle(y, eta, with_gradient=False)
    h = fd_step * eta
    lp = solver.lam(y, eta + h)
    lm = solver.lam(y, eta - h)
    fd = (lp - lm) / (2 * h)
    ibq, _, _, iqphi = solver.integrals(b)
    alt = solver.alternative_lambda(b)
    dphi = solver.dphi_deta(y, eta)
    nb = b.i_bar
    wb = _quad.simpson_weights(nb + 1, solver.h)
    q_dphi = float(wb @ (b.q_profile[: nb + 1] * dphi))
    half = b.d2lambda_deta2 / (2 * b.dlambda_deta)
    return IdentityResiduals(
        tuple(float(v) for v in y), float(eta), b.lam,
        implicit=abs(eta * b.F - 1.0),
        dlambda_fd_rel=abs(fd - b.dlambda_deta) / abs(b.dlambda_deta),
        alternative=abs(alt - b.lam),
        phi0=abs(b.phi_profile[0] + b.dlambda_deta),
        q_phi=abs(iqphi - 1.0),
        q_dphi=q_dphi,
        dual_slope_literal=abs(q_dphi + half),
        dual_slope_corrected=abs(q_dphi - half),
        margin=b.concavity_margin,
        cauchy_schwarz=b.F_lam**2 - b.F * b.F_lamlam,
    )
