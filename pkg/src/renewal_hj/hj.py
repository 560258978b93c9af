"""Hamilton-Jacobi phase: the epsilon-scaled nonlocal equation and its limit.

Both solvers are explicit in time. The epsilon problem advances
``U <- U - dt Lambda(y, eta_eps[U])`` where ``eta_eps`` integrates the kernel
against ``exp((U(y + eps z) - U(y))/eps)``; the limit problem advances
``U <- U + dt H(y, grad U)`` with ``H(y, p) = -Lambda(y, m(p))`` through a local
Lax-Friedrichs flux.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eigen import EigenSolver
from .errors import CFLViolation, MonitorBreach, PaddingExceeded

N_GAUSS = 24
SLACK = 1e-8
ALPHA_MARGIN = 1.1


# ---------------------------------------------------------------------------
# renewal weight operators


def _extend_linear(U, pad, axis):
    """Pad ``U`` by ``pad`` nodes on ``axis`` using the boundary gradient."""
    if pad == 0:
        return U
    k = np.arange(1, pad + 1, dtype=float)
    shape = [1] * U.ndim
    shape[axis] = pad
    k = k.reshape(shape)
    first = np.take(U, [0], axis=axis)
    second = np.take(U, [1], axis=axis)
    last = np.take(U, [-1], axis=axis)
    prev = np.take(U, [-2], axis=axis)
    left = first - np.flip(k, axis=axis) * (second - first)
    right = last + k * (last - prev)
    return np.concatenate([left, U, right], axis=axis)


class ShiftOperator:
    """Gathers ``U(y + eps z_k)`` for every node and kernel point.

    Shifts are the same at every node, so each kernel point reduces to an
    integer offset plus a linear interpolation weight per axis.
    """

    def __init__(self, trait, kernel, epsilon, pad=None):
        self.trait = trait
        self.kernel = kernel
        self.epsilon = float(epsilon)
        z, w = kernel.quadrature
        self.weights = w
        reach = [self.epsilon * max(abs(z[:, i].min()), abs(z[:, i].max())) for i in range(trait.n)]
        if pad is not None:
            pad = np.broadcast_to(np.atleast_1d(pad), (trait.n,))
            for i in range(trait.n):
                if reach[i] > pad[i] + 1e-12:
                    raise PaddingExceeded(
                        f"eps * kernel reach {reach[i]:.6g} exceeds padding {pad[i]:.6g} on axis {i}"
                    )
        self.q = []
        self.r = []
        self.pad = []
        for i, h in enumerate(trait.spacing):
            if trait.counts[i] == 1:
                self.q.append(np.zeros(len(w), dtype=int))
                self.r.append(np.zeros(len(w)))
                self.pad.append(0)
                continue
            s = self.epsilon * z[:, i] / h
            q = np.floor(s).astype(int)
            r = s - q
            self.q.append(q)
            self.r.append(r)
            self.pad.append(int(max(np.abs(q).max() + 2, 2)))

    def gather(self, U):
        """``U(y + eps z_k)``, shape ``U.shape + (K,)``.

        Periodic grids wrap around; otherwise ``U`` is continued linearly.
        """
        Ue = U
        for ax, p in enumerate(self.pad):
            if p:
                if self.trait.periodic:
                    Ue = np.concatenate([np.take(Ue, range(-p, 0), axis=ax, mode="wrap"), Ue,
                                         np.take(Ue, range(p), axis=ax, mode="wrap")], axis=ax)
                else:
                    Ue = _extend_linear(Ue, p, ax)
        n = U.ndim
        base = np.meshgrid(*[np.arange(m) for m in U.shape], indexing="ij")
        out = 0.0
        for corner in range(2**n):
            # degenerate axes (a single node) have no upper corner
            if any((corner >> ax) & 1 and not self.pad[ax] for ax in range(n)):
                continue
            idx = []
            wt = 1.0
            for ax in range(n):
                c = (corner >> ax) & 1
                i = base[ax][..., None] + self.q[ax] + c + self.pad[ax]
                idx.append(i)
                rr = self.r[ax]
                wt = wt * (rr if c else 1.0 - rr)
            out = out + wt * Ue[tuple(idx)]
        return out


def _eta_from_shifts(U, shifted, weights, epsilon):
    expo = (shifted - U[..., None]) / epsilon
    return np.exp(expo) @ weights


def eta_eps_field(U, trait, kernel, epsilon, op=None):
    """Renewal weight ``int M(z) exp((U(y + eps z) - U(y))/eps) dz`` on the grid."""
    U = np.asarray(U, dtype=float).reshape(trait.shape)
    op = op or ShiftOperator(trait, kernel, epsilon)
    return _eta_from_shifts(U, op.gather(U), op.weights, epsilon)


def eta_eps(state, kernel, y_index, op=None):
    """Renewal weight at a single node of ``state``."""
    field_ = eta_eps_field(state.U, state.trait, kernel, state.epsilon, op)
    return float(field_[tuple(np.atleast_1d(y_index))])


def _one_sided_slopes(U, trait):
    """Backward and forward differences per axis with linear continuation."""
    out = []
    for ax, h in enumerate(trait.spacing):
        if U.shape[ax] == 1:
            z = np.zeros_like(U)
            out.append((z, z))
            continue
        d = np.diff(U, axis=ax) / h
        first = np.take(d, [0], axis=ax)
        last = np.take(d, [-1], axis=ax)
        back = np.concatenate([first, d], axis=ax)
        fwd = np.concatenate([d, last], axis=ax)
        out.append((back, fwd))
    return out


def limit_eta_field(U, trait, kernel):
    """``m(grad U)`` with centered differences (one-sided at the box edges)."""
    U = np.asarray(U, dtype=float).reshape(trait.shape)
    slopes = _one_sided_slopes(U, trait)
    p = np.stack([0.5 * (b + f) for b, f in slopes], axis=-1)
    return kernel.exp_moment(p)


def _min_second_difference(U, trait):
    sc = math.inf
    for ax, h in enumerate(trait.spacing):
        if U.shape[ax] > 2:
            sc = min(sc, float(np.min(np.diff(U, n=2, axis=ax))) / h**2)
    return sc


# ---------------------------------------------------------------------------
# state and monitors


@dataclass
class Monitors:
    """Running a-priori estimate checks; ``breaches`` collects soft failures."""

    dtU_min: float = math.inf
    dtU_max: float = -math.inf
    bracket_excess: float = 0.0
    lipschitz_const: float = 0.0
    lipschitz_bound: float = math.inf
    semiconvexity_min: float = math.inf
    semiconvexity_slope: float = 0.0
    eta_tv_accum: float = 0.0
    eta_dt_accum: float = 0.0
    clamp_count: int = 0
    hard_breaches: int = 0
    breaches: list = field(default_factory=list)

    def as_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "breaches"}
        d["soft_breaches"] = len(self.breaches)
        d["first_breaches"] = self.breaches[:10]
        return d


@dataclass
class HJState:
    """Phase ``U`` on the trait grid plus derived fields; ``epsilon == 0`` is the limit."""

    U: np.ndarray
    eta_field: np.ndarray
    lambda_field: np.ndarray
    t: float
    epsilon: float
    trait: object
    monitors: Monitors = field(default_factory=Monitors)
    eta_raw: np.ndarray | None = None


@dataclass(frozen=True)
class ClampEvent:
    t: float
    count: int
    max_excess: float
    at_argmax: bool


def sup_and_argmax(state_or_U, trait=None):
    """Grid maximum refined by a parabola through the three nodes around it.

    Returns ``(value, y, multiplicity)``; ties go to the lexicographically
    smallest node.
    """
    if isinstance(state_or_U, HJState):
        U, trait = state_or_U.U, state_or_U.trait
    else:
        U = np.asarray(state_or_U, dtype=float).reshape(trait.shape)
    flat = U.ravel()
    top = flat.max()
    ties = np.flatnonzero(flat == top)
    idx = np.unravel_index(int(ties[0]), U.shape)
    y = np.array([trait.axes[ax][i] for ax, i in enumerate(idx)])
    value = float(top)
    for ax, h in enumerate(trait.spacing):
        i = idx[ax]
        if U.shape[ax] < 3 or i == 0 or i == U.shape[ax] - 1:
            continue
        sl = list(idx)
        sl[ax] = i - 1
        um = U[tuple(sl)]
        sl[ax] = i + 1
        up = U[tuple(sl)]
        u0 = U[idx]
        curv = um - 2 * u0 + up
        if curv < 0:
            off = 0.5 * (um - up) / curv
            y[ax] += off * h
            value = max(value, float(u0 - 0.125 * (up - um) ** 2 / curv))
    return value, y, int(len(ties))


# ---------------------------------------------------------------------------
# solver


@dataclass
class HJFrame:
    t: float
    U: np.ndarray
    eta: np.ndarray
    lam: np.ndarray


@dataclass
class HJRun:
    """Frames at the recording times plus per-step diagnostic rows."""

    epsilon: float
    trait: object
    frames: list
    rows: list
    monitors: Monitors
    clamp_events: list
    dt: float
    halt_reason: str = ""

    def frame_at(self, t):
        for f in self.frames:
            if abs(f.t - t) < 1e-9:
                return f
        raise KeyError(f"no frame at t = {t}")

    ROW_HEADER = ("t", "supU", "argmax", "eta_at_argmax", "dtU_min", "dtU_max",
                  "lipschitz", "semiconvexity_min", "eta_tv_accum")


class HJSolver:
    """Explicit solver for one epsilon (``epsilon = 0`` for the limit equation).

    ``k0``, ``lipschitz_growth`` (``L/(l eta_lower^2)``) and
    ``semiconvexity_C`` feed the soft monitors. The time step is chosen at
    the start of every recording interval from the current wave speed and
    reaction rate, then held fixed inside the interval.
    """

    def __init__(self, coeffs, kernel, bounds, trait, epsilon, k0=0.0, lipschitz_growth=0.0,
                 semiconvexity_C=None, n_gauss=N_GAUSS, pad=None, grid_slack=None, safety=0.25):
        self.coeffs = coeffs
        self.kernel = kernel
        self.bounds = bounds
        self.trait = trait
        self.epsilon = float(epsilon)
        self.k0 = float(k0)
        self.lipschitz_growth = float(lipschitz_growth)
        self.semiconvexity_C = semiconvexity_C
        self.safety = float(safety)
        self.eigen = EigenSolver(coeffs, bounds, dy=min(trait.spacing))
        self.ys = trait.points()
        self.field = self.eigen.field(self.ys, n_gauss=n_gauss)
        lo, hi = self.field.eta_band()
        self.eta_lo = lo.reshape(trait.shape)
        self.eta_hi = hi.reshape(trait.shape)
        self.grid_slack = grid_slack if grid_slack is not None else 2.0 * max(trait.spacing)
        self.inv_h = np.array([1.0 / h if m > 1 else 0.0 for h, m in zip(trait.spacing, trait.counts)])
        self.op = ShiftOperator(trait, kernel, self.epsilon, pad) if self.epsilon > 0 else None

    # -- evaluation -------------------------------------------------------------

    def raw_eta(self, U):
        if self.epsilon > 0:
            return _eta_from_shifts(U, self.op.gather(U), self.op.weights, self.epsilon)
        return limit_eta_field(U, self.trait, self.kernel)

    def _solve(self, eta, t, U):
        if not np.all(np.isfinite(eta)) or np.any(eta <= 0):
            raise MonitorBreach(f"renewal weight not positive at t = {t:.6g}")
        clamped_eta = np.clip(eta, self.eta_lo, self.eta_hi)
        excess = np.maximum(self.eta_lo - eta, eta - self.eta_hi)
        sol = self.field.solve(clamped_eta.ravel(), clamp=True, warm=True)
        event = None
        over = excess > SLACK * self.eta_hi
        if over.any():
            i_arg = np.unravel_index(int(np.argmax(U)), U.shape)
            event = ClampEvent(t, int(over.sum()), float(excess.max()), bool(over[i_arg]))
        return clamped_eta, sol, event

    def _slopes(self, U):
        slopes = _one_sided_slopes(U, self.trait)
        pm = np.stack([b for b, _ in slopes], axis=-1)
        pp = np.stack([f for _, f in slopes], axis=-1)
        return pm, pp

    def _alpha(self, pm, pp, dlam_abs):
        """Per-axis local dissipation ``>= |dH/dp_i|`` on the slope box ``[p-, p+]``.

        ``|grad m|`` is maximal at a corner of the box since each component of
        ``grad m`` is monotone in its own slope and positive factors elsewhere.
        """
        n = self.trait.n
        alpha = np.zeros(pm.shape)
        for corner in range(2**n):
            p = np.where(((corner >> np.arange(n)) & 1).astype(bool), pp, pm)
            alpha = np.maximum(alpha, np.abs(self.kernel.moments(p)[1]))
        return alpha * (ALPHA_MARGIN * dlam_abs)[..., None]

    def _rates(self, U, t):
        """``(dU/dt, clamped eta, raw eta, lam, |dLambda/deta|, alpha, event)``."""
        if self.epsilon > 0:
            eta = self.raw_eta(U)
            eta_c, sol, event = self._solve(eta, t, U)
            lam = sol.lam.reshape(U.shape)
            dlam = np.abs(sol.dlambda_deta).reshape(U.shape)
            return -lam, eta_c, eta, lam, dlam, None, event
        pm, pp = self._slopes(U)
        eta = self.kernel.moments(0.5 * (pm + pp))[0]
        eta_c, sol, event = self._solve(eta, t, U)
        lam = sol.lam.reshape(U.shape)
        dlam = np.abs(sol.dlambda_deta).reshape(U.shape)
        alpha = self._alpha(pm, pp, dlam)
        diss = 0.5 * np.sum(alpha * (pp - pm), axis=-1)
        return -lam + diss, eta_c, eta, lam, dlam, alpha, event

    def stable_dt(self, state):
        """``safety`` times the explicit stability limit at ``state``."""
        U = state.U
        pm, pp = self._slopes(U)
        if self.epsilon > 0:
            sol = self.field.solve(state.eta_field.ravel(), warm=True)
            dlam = np.abs(sol.dlambda_deta).reshape(U.shape)
        else:
            eta = np.clip(self.kernel.moments(0.5 * (pm + pp))[0], self.eta_lo, self.eta_hi)
            dlam = np.abs(self.field.solve(eta.ravel(), warm=True).dlambda_deta).reshape(U.shape)
        alpha = self._alpha(pm, pp, dlam)
        rate = float(np.max(alpha @ self.inv_h))
        if self.epsilon > 0:
            rate = max(rate, float(np.max(dlam * state.eta_field)) / self.epsilon)
        return self.safety / rate if rate > 0 else 0.05

    def initial_state(self, U0):
        U = np.asarray(U0, dtype=float).reshape(self.trait.shape).copy()
        _, eta_c, eta, lam, _, _, _ = self._rates(U, 0.0)
        st = HJState(U, eta_c, lam, 0.0, self.epsilon, self.trait, Monitors(), eta)
        st.monitors.lipschitz_bound = self.k0 + self.grid_slack
        if self.semiconvexity_C is None:
            sc = _min_second_difference(U, self.trait)
            self.semiconvexity_C = max(0.0, -sc)
        self._update_regularity(st)
        return st

    def step(self, state, dt):
        """Advance one explicit step of size ``dt``; returns ``(state, ClampEvent | None)``."""
        U = state.U
        rate, eta_c, eta, lam, dlam, alpha, event = self._rates(U, state.t)
        if alpha is not None:
            cfl = dt * float(np.max(alpha @ self.inv_h))
            if cfl > 1.0:
                raise CFLViolation(f"Lax-Friedrichs number {cfl:.4g} > 1 at t = {state.t:.6g}")
        elif dt * float(np.max(dlam * eta_c)) / self.epsilon > 1.0:
            raise CFLViolation(f"monotonicity bound exceeded at t = {state.t:.6g}")
        U_new = U + dt * rate
        t_new = state.t + dt
        m = replace(state.monitors)
        m.breaches = state.monitors.breaches
        m.dtU_min = min(m.dtU_min, float(rate.min()))
        m.dtU_max = max(m.dtU_max, float(rate.max()))
        lo_b, hi_b = -self.bounds.lambda_upper, -self.bounds.lambda_lower
        exc = max(lo_b - rate.min(), rate.max() - hi_b, 0.0) * dt
        m.bracket_excess = max(m.bracket_excess, exc)
        if exc > 1e-6 * dt:
            m.breaches.append(("dtU bracket", t_new, exc))
        prev_eta = state.eta_field
        m.eta_tv_accum += abs(float(eta_c.max()) - float(prev_eta.max()))
        m.eta_dt_accum += float(np.max(np.abs(eta_c - prev_eta)))
        if event is not None:
            m.clamp_count += 1
        new = HJState(U_new, eta_c, lam, t_new, self.epsilon, self.trait, m, eta)
        self._update_regularity(new)
        return new, event

    def _update_regularity(self, st):
        m = st.monitors
        slopes = _one_sided_slopes(st.U, self.trait)
        lip = max(float(np.max(np.abs(f))) for _, f in slopes)
        bound = self.k0 + self.lipschitz_growth * st.t + self.grid_slack
        m.lipschitz_const = max(m.lipschitz_const, lip)
        m.lipschitz_bound = bound
        if lip > bound:
            m.breaches.append(("lipschitz", st.t, lip - bound))
        sc = _min_second_difference(st.U, self.trait)
        m.semiconvexity_min = min(m.semiconvexity_min, sc)
        if st.t > 0 and math.isfinite(sc):
            m.semiconvexity_slope = max(m.semiconvexity_slope, (-self.semiconvexity_C - sc) / st.t)

    # -- driver -----------------------------------------------------------------

    def run(self, U0, t_final, frame_dt=0.05, max_dt=None):
        """Integrate to ``t_final`` recording frames every ``frame_dt``."""
        n_frames = int(round(t_final / frame_dt))
        st = self.initial_state(U0)
        frames = [HJFrame(0.0, st.U.copy(), st.eta_field.copy(), st.lambda_field.copy())]
        rows = [self._row(st)]
        events = []
        halt = ""
        dts = []
        for k in range(1, n_frames + 1):
            dt_cap = min(self.stable_dt(st), max_dt or math.inf)
            sub = max(1, int(math.ceil(frame_dt / dt_cap - 1e-9)))
            dt = frame_dt / sub
            dts.append(dt)
            for _ in range(sub):
                st, ev = self.step(st, dt)
                if ev is not None:
                    events.append(ev)
                    if ev.at_argmax:
                        halt = f"eta band binds at the argmax, t = {st.t:.6g}"
                        st.monitors.hard_breaches += 1
                rows.append(self._row(st))
                if halt:
                    break
            if halt:
                break
            st.t = k * frame_dt
            frames.append(HJFrame(st.t, st.U.copy(), st.eta_field.copy(), st.lambda_field.copy()))
        return HJRun(self.epsilon, self.trait, frames, rows, st.monitors, events, min(dts), halt)

    def _row(self, st):
        val, y, _ = sup_and_argmax(st)
        i = self.trait.nearest_index(y)
        m = st.monitors
        return (st.t, val, *y, float(st.eta_field[i]), m.dtU_min, m.dtU_max, m.lipschitz_const,
                m.semiconvexity_min, m.eta_tv_accum)


def step_U_eps(state, solver, dt):
    """One step of the epsilon problem; ``solver.epsilon`` must be positive."""
    if solver.epsilon <= 0:
        raise ValueError("step_U_eps needs a positive epsilon")
    return solver.step(state, dt)[0]


def step_U_limit(state, solver, dt):
    """One step of the limit equation."""
    if solver.epsilon != 0:
        raise ValueError("step_U_limit needs epsilon = 0")
    return solver.step(state, dt)[0]
