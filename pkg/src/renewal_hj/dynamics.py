"""Canonical equation for the dominant trait and route comparisons.

While ``U(t, .)`` has a single nondegenerate maximum at ``ybar(t)``,

    dybar/dt = (D2U)^-1 grad_y Lambda(ybar, 1) + dLambda/deta(ybar, 1) int M(z) z dz,

and ``rho(t) = -Lambda(ybar(t), 1)``. The Hessian comes from the recorded
limit run, interpolated linearly in time between frames; the fitness terms
come from the eigen solver at ``eta = 1`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import OutOfDomain, SingularHessian
from .hj import sup_and_argmax

DET_MIN = 1e-10
JUMP_NODES = 3
EDGE_NODES = 2


# ---------------------------------------------------------------------------
# Hessians


def hessian_field(U, trait):
    """Centered second differences on interior nodes, shape ``trait.shape + (n, n)``.

    Boundary rows copy their neighbours; :func:`hessian_at` never reads them
    because it requires two nodes of clearance.
    """
    U = np.asarray(U, dtype=float).reshape(trait.shape)
    n = trait.n
    H = np.zeros(trait.shape + (n, n))
    h = trait.spacing
    for a in range(n):
        if U.shape[a] < 3:
            continue
        d2 = np.zeros_like(U)
        core = [slice(None)] * n
        core[a] = slice(1, -1)
        d2[tuple(core)] = np.diff(U, 2, axis=a) / h[a] ** 2
        H[..., a, a] = d2
    if n == 2 and min(U.shape) >= 3:
        cross = np.zeros_like(U)
        cross[1:-1, 1:-1] = (U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]) / (4 * h[0] * h[1])
        H[..., 0, 1] = H[..., 1, 0] = cross
    return H


def _check_clearance(y, trait):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    for a, ax in enumerate(trait.axes):
        if len(ax) < 2 * EDGE_NODES + 1:
            continue
        lo = ax[EDGE_NODES]
        hi = ax[-1 - EDGE_NODES]
        if not lo <= y[a] <= hi:
            raise OutOfDomain(f"trait {y} within {EDGE_NODES} nodes of the boundary")
    return y


def _interp_hessian(H, trait, y):
    interp = RegularGridInterpolator(tuple(trait.axes), H, method="linear")
    return interp(y[None, :])[0]


def classify_hessian(H):
    """Symmetrize and raise :class:`SingularHessian` unless negative definite."""
    H = 0.5 * (H + H.T)
    det = float(np.linalg.det(H))
    if abs(det) < DET_MIN:
        raise SingularHessian(f"|det D2U| = {abs(det):.3g} < {DET_MIN}")
    if float(np.max(np.linalg.eigvalsh(H))) >= 0:
        raise SingularHessian("D2U is not negative definite")
    return H, det


def hessian_at(hj, y, trait=None):
    """``D2U`` at trait ``y`` from an :class:`HJState` (or ``U`` with ``trait``).

    Second differences are interpolated linearly between nodes.
    """
    if trait is None:
        U, trait = hj.U, hj.trait
    else:
        U = hj
    y = _check_clearance(y, trait)
    H = _interp_hessian(hessian_field(U, trait), trait, y)
    return classify_hessian(H)[0]


class HessianSeries:
    """Hessian and argmax of every frame of a limit run, interpolated in time."""

    def __init__(self, hj_run):
        self.run = hj_run
        self.trait = hj_run.trait
        self.times = np.array([f.t for f in hj_run.frames])
        self.fields = [hessian_field(f.U, self.trait) for f in hj_run.frames]
        self.argmax = np.array([sup_and_argmax(f.U, self.trait)[1] for f in hj_run.frames])
        self.sup = np.array([sup_and_argmax(f.U, self.trait)[0] for f in hj_run.frames])

    @property
    def t_end(self):
        return float(self.times[-1])

    def jump_time(self):
        """First frame time where the argmax moves more than ``3 dy``."""
        h = np.array(self.trait.spacing)
        for k in range(1, len(self.times)):
            if np.any(np.abs(self.argmax[k] - self.argmax[k - 1]) > JUMP_NODES * h):
                return float(self.times[k])
        return None

    def at(self, t, y):
        """``(H, det)`` at time ``t`` and trait ``y``."""
        y = _check_clearance(y, self.trait)
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise OutOfDomain(f"t = {t} outside the recorded run")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            H = _interp_hessian(self.fields[0], self.trait, y)
        else:
            t0, t1 = self.times[k], self.times[k + 1]
            w = (t - t0) / (t1 - t0)
            H = ((1 - w) * _interp_hessian(self.fields[k], self.trait, y)
                 + w * _interp_hessian(self.fields[k + 1], self.trait, y))
        return classify_hessian(H)

    def argmax_at(self, t):
        return np.array([np.interp(t, self.times, self.argmax[:, a]) for a in range(self.trait.n)])


# ---------------------------------------------------------------------------
# fitness at eta = 1


def fitness_at(solver, y):
    """``(Lambda, dLambda/deta, grad_y Lambda)`` at ``(y, 1)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sol = solver.field(y[None, :]).solve(np.array([1.0]))
    lam = float(sol.lam[0])
    Fl = float(sol.F_lam[0])
    grad = np.zeros_like(y)
    if not solver.coeffs.params.get("y_independent", False):
        for i in range(len(y)):
            e = np.zeros_like(y)
            e[i] = solver.dy
            fp = solver.field((y + e)[None, :]).F_all(np.array([lam]))[0][0]
            fm = solver.field((y - e)[None, :]).F_all(np.array([lam]))[0][0]
            grad[i] = -((fp - fm) / (2 * solver.dy)) / Fl
    return lam, -1.0 / Fl, grad


# ---------------------------------------------------------------------------
# trajectory


@dataclass
class TrajectorySample:
    t: float
    y_bar: np.ndarray
    rho: float
    lambda_at: float
    hessian: np.ndarray
    det: float
    velocity: np.ndarray
    drho_dt: float


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    halt_reason: str = ""
    halt_time: float | None = None

    ROW_HEADER = ("t", "y_bar", "rho", "lambda_at", "det_hessian", "halt_reason")

    @property
    def times(self):
        return np.array([s.t for s in self.samples])

    @property
    def y_bar(self):
        return np.array([s.y_bar for s in self.samples])

    @property
    def rho(self):
        return np.array([s.rho for s in self.samples])

    @property
    def lambda_at(self):
        return np.array([s.lambda_at for s in self.samples])

    def rows(self):
        out = []
        for i, s in enumerate(self.samples):
            reason = self.halt_reason if i == len(self.samples) - 1 else ""
            out.append((s.t, *s.y_bar, s.rho, s.lambda_at, s.det, reason))
        return out

    def at(self, t):
        """Sample at time ``t`` (linear interpolation between samples)."""
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise OutOfDomain(f"t = {t} outside the trajectory")
        yb = self.y_bar
        return np.array([np.interp(t, ts, yb[:, a]) for a in range(yb.shape[1])])


class CanonicalODE:
    """Right-hand side of the canonical equation along a recorded limit run."""

    def __init__(self, series, solver, kernel):
        self.series = series
        self.solver = solver
        self.kernel = kernel
        self.drift = np.atleast_1d(kernel.first_moment())

    def velocity(self, t, y):
        H, _ = self.series.at(t, y)
        lam, dlam, grad = fitness_at(self.solver, y)
        return np.linalg.solve(H, grad) + dlam * self.drift

    def sample(self, t, y):
        H, det = self.series.at(t, y)
        lam, dlam, grad = fitness_at(self.solver, y)
        v = np.linalg.solve(H, grad) + dlam * self.drift
        return TrajectorySample(t, np.array(y, dtype=float), -lam, lam, H, det, v,
                                float(-grad @ v))


def canonical_step(traj, ode, dt):
    """Append one RK4 step of size ``dt`` to ``traj``."""
    s = traj.samples[-1]
    t, y = s.t, s.y_bar
    k1 = s.velocity
    k2 = ode.velocity(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = ode.velocity(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = ode.velocity(t + dt, y + dt * k3)
    y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    traj.samples.append(ode.sample(t + dt, y_new))
    return traj


def integrate_canonical(hj_run, solver, kernel, t_final=None, dt=0.005, y0=None):
    """Integrate from the initial argmax until ``t_final`` or the validity horizon.

    Halts at the first Hessian near-singularity, argmax jump of more than
    three nodes between frames, or exit from the trait box.
    """
    series = HessianSeries(hj_run)
    ode = CanonicalODE(series, solver, kernel)
    t_final = series.t_end if t_final is None else min(t_final, series.t_end)
    jump = series.jump_time()
    y0 = series.argmax[0] if y0 is None else np.atleast_1d(np.asarray(y0, dtype=float))
    traj = Trajectory()
    try:
        traj.samples.append(ode.sample(0.0, y0))
    except (SingularHessian, OutOfDomain) as exc:
        traj.halt_reason = _reason(exc)
        traj.halt_time = 0.0
        return traj
    n = int(round(t_final / dt))
    for k in range(1, n + 1):
        t_next = k * dt
        if jump is not None and t_next > jump + 1e-12:
            traj.halt_reason = "argmax jump"
            traj.halt_time = traj.samples[-1].t
            return traj
        try:
            canonical_step(traj, ode, t_next - traj.samples[-1].t)
        except (SingularHessian, OutOfDomain) as exc:
            traj.halt_reason = _reason(exc)
            traj.halt_time = traj.samples[-1].t
            return traj
    traj.halt_time = traj.samples[-1].t
    return traj


def _reason(exc):
    return "singular hessian" if isinstance(exc, SingularHessian) else "domain exit"


# ---------------------------------------------------------------------------
# route comparison


@dataclass
class ComparisonReport:
    times: np.ndarray
    argmax_gap: np.ndarray
    eta_at_ybar_defect: np.ndarray
    rho_lambda_defect: float
    rho_route_gap: np.ndarray
    drho_relative_gap: float
    rho_monotone_violation: float
    lambda_monotone_violation: float
    centroid_gap: dict
    constraint_gap: dict

    def as_dict(self):
        return {
            "t_max": float(self.times[-1]) if len(self.times) else 0.0,
            "argmax_gap_max": float(np.max(self.argmax_gap)) if len(self.argmax_gap) else 0.0,
            "eta_at_ybar_defect_max": float(np.max(np.abs(self.eta_at_ybar_defect)))
            if len(self.eta_at_ybar_defect) else 0.0,
            "rho_lambda_defect": self.rho_lambda_defect,
            "rho_route_gap_max": float(np.max(self.rho_route_gap)) if len(self.rho_route_gap) else 0.0,
            "drho_relative_gap": self.drho_relative_gap,
            "rho_monotone_violation": self.rho_monotone_violation,
            "lambda_monotone_violation": self.lambda_monotone_violation,
            "centroid_gap_max": {str(k): float(np.max(v)) for k, v in self.centroid_gap.items()},
            "constraint_gap_final": {str(k): float(v[-1]) for k, v in self.constraint_gap.items()},
        }


def _eta_at(frame, trait, y):
    interp = RegularGridInterpolator(tuple(trait.axes), frame.eta, method="linear")
    return float(interp(np.atleast_2d(y))[0])


def compare_routes(traj, hj_run, solver=None, pop_runs=None, hj_eps_runs=None):
    """Compare the ODE route with the limit run and with epsilon runs.

    ``pop_runs`` and ``hj_eps_runs`` map epsilon to a :class:`DirectRun` and
    an epsilon :class:`HJRun`; both are optional.
    """
    trait = hj_run.trait
    t_end = traj.samples[-1].t if traj.samples else -1.0
    frames = [f for f in hj_run.frames if f.t <= t_end + 1e-9]
    times = np.array([f.t for f in frames])
    gaps, eta_def = [], []
    for f in frames:
        yb = traj.at(f.t)
        ya = sup_and_argmax(f.U, trait)[1]
        gaps.append(float(np.linalg.norm(yb - ya)))
        eta_def.append(_eta_at(f, trait, yb) - 1.0)

    rho_lam = 0.0
    if solver is not None:
        for s in traj.samples:
            lam = fitness_at(solver, s.y_bar)[0]
            rho_lam = max(rho_lam, abs(s.rho + lam))

    # rho from the HJ route: growth rate of sup U between frames
    route = []
    sups = [sup_and_argmax(f.U, trait)[0] for f in frames]
    for k in range(1, len(frames)):
        tm = 0.5 * (frames[k].t + frames[k - 1].t)
        rate = (sups[k] - sups[k - 1]) / (frames[k].t - frames[k - 1].t)
        rho_mid = float(np.interp(tm, traj.times, traj.rho))
        route.append(abs(rate - rho_mid))

    ts, rho = traj.times, traj.rho
    drho_gap = 0.0
    if len(ts) >= 3:
        fd = (rho[2:] - rho[:-2]) / (ts[2:] - ts[:-2])
        formula = np.array([s.drho_dt for s in traj.samples[1:-1]])
        scale = max(float(np.max(np.abs(formula))), 1e-12)
        drho_gap = float(np.max(np.abs(fd - formula)) / scale)
        if float(np.max(np.abs(formula))) < 1e-12 and float(np.max(np.abs(fd))) < 1e-12:
            drho_gap = 0.0
    rho_viol = float(max(0.0, np.max(rho[:-1] - rho[1:]))) if len(rho) > 1 else 0.0
    lam_at = traj.lambda_at
    lam_viol = float(max(0.0, np.max(lam_at[1:] - lam_at[:-1]))) if len(lam_at) > 1 else 0.0

    centroid, constraint = {}, {}
    for eps, run in (pop_runs or {}).items():
        g = []
        for fr in run.frames:
            if fr.t > t_end + 1e-9:
                break
            w = fr.marginal
            pts = run.trait.mesh()
            c = np.tensordot(w, pts, axes=(tuple(range(run.trait.n)),) * 2) / w.sum()
            g.append(float(np.linalg.norm(c - traj.at(fr.t))))
        centroid[eps] = np.array(g)
        hrun = (hj_eps_runs or {}).get(eps)
        if hrun is not None:
            constraint[eps] = np.array([
                abs(fr.rho_integral - sup_and_argmax(hrun.frame_at(fr.t).U, hrun.trait)[0])
                for fr in run.frames
            ])
    return ComparisonReport(times, np.array(gaps), np.array(eta_def), rho_lam, np.array(route),
                            drho_gap, rho_viol, lam_viol, centroid, constraint)


def rho_rate(traj):
    """``drho/dt = -grad_y Lambda . dybar/dt`` at every sample."""
    return np.array([s.drho_dt for s in traj.samples])


def lyapunov_ok(traj, slack=1e-8):
    """Even-kernel monotonicities: ``rho`` up and ``Lambda(ybar, 1)`` down."""
    rho, lam = traj.rho, traj.lambda_at
    if len(rho) < 2:
        return True
    return bool(np.all(np.diff(rho) >= -slack) and np.all(np.diff(lam) <= slack))


__all__ = [
    "ComparisonReport", "CanonicalODE", "HessianSeries", "Trajectory", "TrajectorySample",
    "canonical_step", "classify_hessian", "compare_routes", "fitness_at", "hessian_at",
    "hessian_field", "integrate_canonical", "lyapunov_ok", "rho_rate",
]
