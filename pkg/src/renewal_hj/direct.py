"""Direct solver for the epsilon-scaled renewal equation in age and trait.

Transport in age is first-order upwind at speed ``A/eps`` and the loss term
``(rho + d)/eps`` is integrated exactly over each step. The inflow at age 0
comes from the birth integral convolved with the scaled mutation kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _quad
from .eigen import EigenSolver
from .errors import CFLViolation, ExpOverflow, NegativeDensity
from .grid import age_grid
from .hj import ShiftOperator, eta_eps_field

EXP_LIMIT = 700.0
INFLOW_TOL = 1e-13


@dataclass
class PopulationState:
    """Density ``m`` with shape ``trait.shape + (n_ages,)``."""

    m: np.ndarray
    rho: float
    rho_integral: float
    t: float
    epsilon: float
    marginal: np.ndarray | None = None


@dataclass
class DirectFrame:
    """Reduced snapshot kept at every recording time.

    ``marginal`` is ``int m dx`` per trait node, ``birth`` is ``int b m dx``
    and ``m_birth`` is ``m`` restricted to ``[0, x_bar]``.
    """

    t: float
    rho: float
    rho_integral: float
    marginal: np.ndarray
    birth: np.ndarray
    m_birth: np.ndarray
    m_full: np.ndarray | None = None


@dataclass
class DirectRun:
    epsilon: float
    trait: object
    x: np.ndarray
    i_bar: int
    frames: list
    rows: list
    dt: float

    ROW_HEADER = ("t", "rho", "rho_integral", "centroid", "fraction_near_peak")

    def frame_at(self, t):
        for f in self.frames:
            if abs(f.t - t) < 1e-9:
                return f
        raise KeyError(f"no frame at t = {t}")


class DirectSolver:
    """Explicit scheme on a uniform age grid with ``x_bar`` on a node."""

    def __init__(self, coeffs, kernel, bounds, trait, epsilon, dx=0.025, x_max=None, n_birth=400):
        self.coeffs = coeffs
        self.kernel = kernel
        self.bounds = bounds
        self.trait = trait
        self.epsilon = float(epsilon)
        self.ys = trait.points()
        self.eigen = EigenSolver(coeffs, bounds, n_birth=n_birth, dy=min(trait.spacing))
        if x_max is None:
            n_prof, _ = self.eigen.profile_length(self.ys)
            x_max = n_prof * self.eigen.h
        self.x = age_grid(coeffs.x_bar, dx, x_max)
        self.dx = float(self.x[1] - self.x[0])
        if math.isfinite(coeffs.x_bar):
            self.i_bar = int(round(coeffs.x_bar / self.dx))
        else:
            self.i_bar = len(self.x) - 1
        shape = trait.shape + (len(self.x),)
        Y = self.ys.reshape(trait.shape + (1, trait.n))
        A, b, d = coeffs.evaluate(self.x, Y)
        self.A = np.broadcast_to(A, shape).copy()
        self.b = np.broadcast_to(b, shape).copy()
        xm = 0.5 * (self.x[1:] + self.x[:-1])
        _, _, dm = coeffs.evaluate(xm, Y)
        self.d_mid = np.broadcast_to(dm, trait.shape + (len(xm),)).copy()
        self.a_max = float(self.A.max())
        nb = self.i_bar
        if nb >= 2 and nb % 2 == 0:
            wb = _quad.simpson_weights(nb + 1, self.dx)
        else:
            wb = _quad.trapezoid_weights(nb + 1, self.dx)
        self.w_birth = np.zeros(len(self.x))
        self.w_birth[: nb + 1] = wb
        self.w_age = _quad.trapezoid_weights(len(self.x), self.dx)
        self.w_trait = self._trait_weights()
        self.op = ShiftOperator(trait, kernel, epsilon) if kernel.kind != "dirac" else None
        self._unit_shift = bool(np.all(self.A == self.a_max))

    def _trait_weights(self):
        w = np.ones(self.trait.shape)
        for ax, (h, m) in enumerate(zip(self.trait.spacing, self.trait.counts)):
            if m == 1:
                continue
            wa = np.full(m, h) if self.trait.periodic else _quad.trapezoid_weights(m, h)
            shape = [1] * self.trait.n
            shape[ax] = m
            w = w * wa.reshape(shape)
        return w

    def max_dt(self):
        return self.epsilon * self.dx / self.a_max

    # -- pieces of the scheme ---------------------------------------------------

    def mass(self, m):
        """``rho`` by the trapezoid rule in age and trait."""
        return float(np.sum((m @ self.w_age) * self.w_trait))

    def birth_density(self, m):
        """``int b m dx`` per trait node."""
        return (self.b * m) @ self.w_birth

    def convolve(self, I):
        """``int M(z) I(y + eps z) dz`` with ``log I`` interpolated linearly."""
        if self.op is None:
            return I
        if np.any(I <= 0):
            raise NegativeDensity("birth density vanished; log interpolation undefined")
        shifted = self.op.gather(np.log(I))
        return np.exp(shifted) @ self.op.weights

    def births(self, m):
        """``A(0, y) m(0, y)`` from the scaled convolution of the birth density."""
        return self.convolve(self.birth_density(m))

    def _inflow(self, interior_births, m0_guess):
        """Solve ``A0 m0 = conv(I_rest + w0 b0 m0)`` by fixed-point iteration.

        The age-0 node's own contribution is a small fraction ``w0 b0 / A0``
        of the birth integral, so the map is a strong contraction.
        """
        A0 = self.A[..., 0]
        wb0 = self.w_birth[0] * self.b[..., 0]
        m0 = m0_guess
        for _ in range(50):
            new = self.convolve(interior_births + wb0 * m0) / A0
            done = np.max(np.abs(new - m0) / np.maximum(np.abs(new), 1e-300)) <= INFLOW_TOL
            m0 = new
            if done:
                break
        return m0

    def initial_state(self, U0, gamma0, p0=None):
        """``m0 = p0 exp(U0/eps)`` with ``p0 = gamma0 Q(x, y, eta0_eps)`` by default."""
        U0 = np.asarray(U0, dtype=float).reshape(self.trait.shape)
        if p0 is None:
            eta0 = eta_eps_field(U0, self.trait, self.kernel, self.epsilon)
            fl = self.eigen.field(self.ys)
            sol = fl.solve(eta0.ravel(), clamp=True)
            Q = self.Q_grid(sol.eta, sol.lam)
            p0 = np.asarray(gamma0, dtype=float).reshape(self.trait.shape)[..., None] * Q
        p0 = np.asarray(p0, dtype=float)
        m = p0 * np.exp(U0 / self.epsilon)[..., None]
        return PopulationState(m, self.mass(m), 0.0, 0.0, self.epsilon), p0

    @cached_property
    def _age_integrals(self):
        """``(A, G, D)`` per node with ``G = int 1/A`` and ``D = int d/A``."""
        A, _, d = self.coeffs.evaluate(self.x[None, :], self.ys[:, None, :])
        A = np.broadcast_to(A, (len(self.ys), len(self.x)))
        G = _quad.cumulative(1.0 / A, self.dx)
        D = _quad.cumulative(d / A, self.dx)
        return A, G, D

    def Q_grid(self, eta, lam, n_ages=None):
        """Q on the first ``n_ages`` ages (all by default) for per-node ``eta`` and ``lam``."""
        A, G, D = self._age_integrals
        sl = slice(0, n_ages)
        Q = np.asarray(eta)[:, None] / A[:, sl] * np.exp(np.asarray(lam)[:, None] * G[:, sl] - D[:, sl])
        return Q.reshape(self.trait.shape + (Q.shape[1],))

    def step(self, state, dt, decay_d=None):
        """One step: upwind transport, exact loss, renewal inflow.

        The loss uses the trapezoid average of ``rho`` over the step, the
        same rule that accumulates ``int rho``; since the new density is
        proportional to ``exp(-rho_new dt/(2 eps))`` this is a scalar
        equation for ``rho_new``. The inflow at age 0 uses the new interior
        ages, which keeps the discrete renewal balance free of a one-cell lag.
        """
        if dt > self.max_dt() * (1 + 1e-12):
            raise CFLViolation(f"dt = {dt:.6g} exceeds eps dx / max A = {self.max_dt():.6g}")
        m = state.m
        if decay_d is None:
            decay_d = np.exp(-self.d_mid * dt / self.epsilon)
        # Unscaled update; births are 1-homogeneous so the common loss factor
        # exp(-a (rho_old + rho_new)) can be applied once at the end.
        new = np.empty_like(m)
        c = dt / (self.epsilon * self.dx)
        if self._unit_shift and abs(c * self.a_max - 1.0) <= 1e-12:
            np.multiply(m[..., :-1], decay_d, out=new[..., 1:])
        else:
            flux = self.A * m
            new[..., 1:] = m[..., 1:] - c * (flux[..., 1:] - flux[..., :-1])
            new[..., 1:] *= decay_d
            if np.any(new[..., 1:] < 0):
                raise NegativeDensity(f"negative density at t = {state.t + dt:.6g}")
        ib = self.i_bar
        rest = (self.b[..., 1 : ib + 1] * new[..., 1 : ib + 1]) @ self.w_birth[1 : ib + 1]
        a = 0.5 * dt / self.epsilon
        new[..., 0] = self._inflow(rest, m[..., 0])
        if np.any(new[..., 0] < 0):
            raise NegativeDensity(f"negative density at t = {state.t + dt:.6g}")
        marginal = new @ self.w_age
        M = float(np.sum(marginal * self.w_trait)) * math.exp(-a * state.rho)
        rho = M
        for _ in range(100):
            f = rho - M * math.exp(-a * rho)
            step_ = f / (1.0 + a * M * math.exp(-a * rho))
            rho -= step_
            if abs(step_) <= 1e-15 * max(1.0, abs(rho)):
                break
        scale = math.exp(-a * (state.rho + rho))
        new *= scale
        marginal *= scale
        rho = float(np.sum(marginal * self.w_trait))
        rho_int = state.rho_integral + 0.5 * dt * (state.rho + rho)
        return PopulationState(new, rho, rho_int, state.t + dt, self.epsilon, marginal)

    def _frame(self, st, keep_full):
        marginal = st.m @ self.w_age if st.marginal is None else st.marginal.copy()
        return DirectFrame(
            st.t, st.rho, st.rho_integral, marginal, self.birth_density(st.m),
            st.m[..., : self.i_bar + 1].copy(), st.m.copy() if keep_full else None,
        )

    def run(self, U0, gamma0, t_final, frame_dt=0.05, p0=None, snapshot_times=(), radius=0.3):
        """Integrate and record a :class:`DirectFrame` every ``frame_dt``."""
        sub = max(1, int(math.ceil(frame_dt / self.max_dt() - 1e-9)))
        dt = frame_dt / sub
        decay_d = np.exp(-self.d_mid * dt / self.epsilon)
        st, _ = self.initial_state(U0, gamma0, p0)
        snaps = {round(t / frame_dt) for t in snapshot_times}
        frames = [self._frame(st, 0 in snaps)]
        rows = [self._row(st, radius)]
        for k in range(1, int(round(t_final / frame_dt)) + 1):
            for _ in range(sub):
                st = self.step(st, dt, decay_d)
                rows.append(self._row(st, radius))
            st.t = k * frame_dt
            frames.append(self._frame(st, k in snaps))
        return DirectRun(self.epsilon, self.trait, self.x, self.i_bar, frames, rows, dt)

    def _row(self, st, radius):
        marginal = (st.m @ self.w_age if st.marginal is None else st.marginal) * self.w_trait
        total = marginal.sum()
        pts = self.ys.reshape(self.trait.shape + (self.trait.n,))
        centroid = np.tensordot(marginal, pts, axes=(tuple(range(self.trait.n)),) * 2) / total
        peak = pts[np.unravel_index(int(np.argmax(marginal)), marginal.shape)]
        near = np.sqrt(np.sum((pts - peak) ** 2, axis=-1)) <= radius + 1e-12
        return (st.t, st.rho, st.rho_integral, *centroid, float(marginal[near].sum() / total))


def step_m(state, solver, dt):
    """One step of the renewal scheme."""
    return solver.step(state, dt)


def mass_fraction_outside(marginal, trait, w_trait, center, radius):
    """Share of ``int m`` carried by traits with ``|y - center| > radius``."""
    pts = trait.mesh()
    dist = np.sqrt(np.sum((pts - np.asarray(center)) ** 2, axis=-1))
    mass = marginal * w_trait
    return float(mass[dist > radius + 1e-12].sum() / mass.sum())


@dataclass
class CorrectorGrid:
    """``p_eps`` on the age grid (or the birth window) and ``int p dx`` per node."""

    p: np.ndarray
    x_integral: np.ndarray
    exponent_max: float


def corrector_exponent(U, rho_integral, epsilon):
    expo = -(np.asarray(U) - rho_integral) / epsilon
    big = float(np.max(np.abs(expo)))
    if big > EXP_LIMIT:
        raise ExpOverflow(f"factorization exponent {big:.4g} exceeds {EXP_LIMIT}")
    return expo, big


def recover_corrector(state_or_frame, U, epsilon, w_age=None, m=None):
    """``p = m exp(-(U - int rho)/eps)`` for a state or a recorded frame.

    ``U`` must come from the epsilon problem at the same time.
    """
    rho_int = state_or_frame.rho_integral
    expo, big = corrector_exponent(U, rho_int, epsilon)
    scale = np.exp(expo)
    if m is None:
        m = state_or_frame.m if isinstance(state_or_frame, PopulationState) else state_or_frame.m_birth
    p = m * scale[..., None]
    if isinstance(state_or_frame, DirectFrame):
        xint = state_or_frame.marginal * scale
    else:
        xint = p @ w_age
    return CorrectorGrid(p, xint, big)
