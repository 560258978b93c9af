"""Corrector diagnostics and the limiting transport equation for gamma.

``gamma_eps = p_eps / Q_eps`` on ``[0, x_bar]`` should stay inside
``[g0_lo exp(-K TV), g0_hi exp(K TV)]`` where ``TV`` accumulates the time
variation of ``eta_eps`` and ``K = 1/eta_lower + max|dLambda/deta| K_transport``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _quad
from .direct import recover_corrector
from .errors import CFLViolation


@dataclass
class CorrectorDiagnostics:
    """Everything :func:`check_gamma_bounds` measures for one epsilon run."""

    epsilon: float
    times: np.ndarray
    gamma_min: np.ndarray
    gamma_max: np.ndarray
    bracket: tuple
    theory_bracket: tuple
    theory_bracket_sup: tuple
    K: float
    x_integral_range: tuple
    envelope_violation: float
    window_envelope_violation: float
    J_mass_defect: float
    ratio_identity_defect: float
    gamma_ratio: np.ndarray = field(repr=False, default=None)

    @property
    def inside_theory(self):
        """Against the bracket built from ``sup_y |d_t eta|``, which bounds every node."""
        lo, hi = self.theory_bracket_sup
        return self.bracket[0] >= lo * (1 - 1e-9) and self.bracket[1] <= hi * (1 + 1e-9)

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "bracket": list(self.bracket),
            "theory_bracket": list(self.theory_bracket),
            "theory_bracket_sup_variation": list(self.theory_bracket_sup),
            "inside_theory": self.inside_theory,
            "K": self.K,
            "x_integral_range": list(self.x_integral_range),
            "envelope_violation": self.envelope_violation,
            "window_envelope_violation": self.window_envelope_violation,
            "J_mass_defect": self.J_mass_defect,
            "ratio_identity_defect": self.ratio_identity_defect,
        }


def bracket_constant(eta_lower, dlam_max, k_transport):
    """``K`` bounding ``|d_t Q_eps / Q_eps| <= K |d_t eta_eps|`` on ``[0, x_bar]``."""
    return 1.0 / eta_lower + dlam_max * k_transport


def envelopes(solver, gamma_lo, gamma_hi, eta_lo, eta_hi, bounds):
    """``(Q_lower, Q_upper)`` on the direct solver's age grid, shape ``trait + (nx,)``."""
    ys = solver.ys
    A, _, d = solver.coeffs.evaluate(solver.x[None, :], ys[:, None, :])
    G = _quad.cumulative(1.0 / A, solver.dx)
    D = _quad.cumulative(d / A, solver.dx)
    up = gamma_hi * eta_hi / A * np.exp(bounds.lambda_upper * G - D)
    lo = gamma_lo * eta_lo / A * np.exp(bounds.lambda_lower * G - D)
    shape = solver.trait.shape + (len(solver.x),)
    return lo.reshape(shape), up.reshape(shape)


def check_gamma_bounds(direct_solver, direct_run, hj_run, tv, gamma0_lo, gamma0_hi, K,
                       tv_sup=None, eta_band=None, window=None):
    """Measure the corrector bracket, envelopes and the J-kernel mass.

    ``tv`` is the time-variation accumulator of the epsilon run (used for the
    theoretical bracket); ``tv_sup`` is the variant accumulating
    ``sup_y |d_t eta|``. ``window`` restricts the bracket to a trait mask.
    """
    eps = direct_run.epsilon
    trait = direct_run.trait
    ib = direct_run.i_bar
    fl = direct_solver.eigen.field(direct_solver.ys)
    bounds = direct_solver.bounds
    lo_t = gamma0_lo * math.exp(-K * tv)
    hi_t = gamma0_hi * math.exp(K * tv)
    tv_sup = tv if tv_sup is None else tv_sup
    lo_s = gamma0_lo * math.exp(-K * tv_sup)
    hi_s = gamma0_hi * math.exp(K * tv_sup)
    eta_lo, eta_hi = eta_band if eta_band is not None else (
        float(fl.eta_band()[0].min()), float(fl.eta_band()[1].max()))
    Qlo, Qhi = envelopes(direct_solver, min(lo_t, lo_s), max(hi_t, hi_s), eta_lo, eta_hi, bounds)
    mask = np.ones(trait.shape, dtype=bool) if window is None else window

    times, gmin, gmax = [], [], []
    xint_lo, xint_hi = math.inf, -math.inf
    env_viol = 0.0
    win_viol = 0.0
    j_def = 0.0
    ratio_def = 0.0
    last_ratio = None
    w_age = direct_solver.w_age
    for fr in direct_run.frames:
        hf = hj_run.frame_at(fr.t)
        corr = recover_corrector(fr, hf.U, eps)
        sol = fl.solve(hf.eta.ravel(), clamp=True)
        Q = direct_solver.Q_grid(sol.eta, sol.lam, ib + 1)
        ratio = corr.p / Q
        times.append(fr.t)
        gmin.append(float(ratio[mask].min()))
        gmax.append(float(ratio[mask].max()))
        last_ratio = ratio
        xint_lo = min(xint_lo, float(corr.x_integral[mask].min()))
        xint_hi = max(xint_hi, float(corr.x_integral[mask].max()))
        A0 = direct_solver.A[..., 0]
        lhs = ratio[..., 0] * hf.eta
        rhs = A0 * corr.p[..., 0]
        ratio_def = max(ratio_def, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
        # strong envelope on the birth window every frame, full ages on snapshots
        pw = corr.p
        v = np.maximum(Qlo[..., : ib + 1] - pw, pw - Qhi[..., : ib + 1]) / Qhi[..., : ib + 1]
        win_viol = max(win_viol, float(v[mask].max()))
        if fr.m_full is not None:
            full = recover_corrector(fr, hf.U, eps, m=fr.m_full).p
            v = np.maximum(Qlo - full, full - Qhi) / Qhi
            env_viol = max(env_viol, float(v[mask].max()))
        j_def = max(j_def, j_mass_defect(direct_solver, hf.U, hf.eta, eps))
    return CorrectorDiagnostics(
        eps, np.array(times), np.array(gmin), np.array(gmax),
        (min(gmin), max(gmax)), (lo_t, hi_t), (lo_s, hi_s), K, (xint_lo, xint_hi),
        max(env_viol, 0.0), max(win_viol, 0.0), j_def, ratio_def, last_ratio,
    )


def j_mass_defect(direct_solver, U, eta, eps):
    """``max_y |int int J_eps dx dz - 1|`` with per-node ``int b Q_eps``."""
    fl = direct_solver.eigen.field(direct_solver.ys)
    sol = fl.solve(np.asarray(eta).ravel(), clamp=True)
    F = fl.F_all(sol.lam)[0]
    bq = (sol.eta * F).reshape(np.shape(U))
    op = direct_solver.op
    if op is None:
        mass = bq
        eta_raw = np.ones_like(bq)
    else:
        shifted_U = op.gather(U)
        shifted_bq = op.gather(bq)
        e = np.exp((shifted_U - U[..., None]) / eps)
        mass = (e * shifted_bq) @ op.weights
        eta_raw = e @ op.weights
    return float(np.max(np.abs(mass / eta_raw - 1.0)))


# ---------------------------------------------------------------------------
# limiting gamma transport


@dataclass
class GammaRun:
    times: np.ndarray
    gamma: list
    saturation_time: float | None
    cap: float
    trait: object


def _upwind_gradient(g, v, trait):
    """Upwind ``v . grad g`` with first-order differences."""
    out = np.zeros_like(g)
    for ax, h in enumerate(trait.spacing):
        if g.shape[ax] < 2:
            continue
        d = np.diff(g, axis=ax) / h
        first = np.take(d, [0], axis=ax)
        last = np.take(d, [-1], axis=ax)
        back = np.concatenate([first, d], axis=ax)
        fwd = np.concatenate([d, last], axis=ax)
        va = v[..., ax]
        out += np.where(va > 0, va * back, va * fwd)
    return out


def gamma_coefficients(solver, kernel, U, eta):
    """Drift ``dLambda/deta grad m(grad U)`` and ``c = int Q d_eta Phi`` per node.

    ``c`` equals ``d2Lambda/deta2 / (2 dLambda/deta)``; the reaction in the
    transport equation is ``c d_t eta gamma``.
    """
    from .hj import _one_sided_slopes

    trait = solver.trait
    slopes = _one_sided_slopes(U, trait)
    p = np.stack([0.5 * (b + f) for b, f in slopes], axis=-1)
    _, grad_m = kernel.moments(p)
    sol = solver.field.solve(np.asarray(eta).ravel(), clamp=True)
    dl = sol.dlambda_deta.reshape(U.shape)
    d2 = sol.d2lambda_deta2.reshape(U.shape)
    return dl[..., None] * grad_m, d2 / (2.0 * dl), dl


def solve_gamma(hj_solver, hj_run, gamma0, cap=50.0, cfl=0.5):
    """Transport ``gamma`` along the limit run.

    ``d_t eta`` is the backward difference between consecutive frames; inside
    each frame interval drift and reaction use the frame at its right end.
    The reaction rate is capped at ``cap`` and the first capped time is
    reported.
    """
    trait = hj_run.trait
    frames = hj_run.frames
    g = np.asarray(gamma0, dtype=float).reshape(trait.shape).copy()
    times = [frames[0].t]
    out = [g.copy()]
    sat = None
    for k in range(1, len(frames)):
        f0, f1 = frames[k - 1], frames[k]
        T = f1.t - f0.t
        deta = (f1.eta - f0.eta) / T
        v, c, _ = gamma_coefficients(hj_solver, hj_solver.kernel, f1.U, f1.eta)
        rate = c * deta
        if np.any(np.abs(rate) > cap):
            if sat is None:
                sat = f1.t
            rate = np.clip(rate, -cap, cap)
        speed = float(np.max(np.sum(np.abs(v) / np.array(trait.spacing), axis=-1)))
        sub = max(1, int(math.ceil(T * speed / cfl - 1e-12)))
        dt = T / sub
        if dt * speed > 1.0:
            raise CFLViolation("gamma transport step exceeds the upwind limit")
        growth = np.exp(dt * rate)
        for _ in range(sub):
            g = (g - dt * _upwind_gradient(g, v, trait)) * growth
        times.append(f1.t)
        out.append(g.copy())
    return GammaRun(np.array(times), out, sat, cap, trait)
