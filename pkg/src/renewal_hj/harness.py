"""Scenario orchestration and the acceptance report.

:func:`run_scenario` validates the configuration, tabulates the eigen
identities, runs the limit Hamilton-Jacobi equation, sweeps epsilon through
the epsilon-scaled phase equation and the direct renewal PDE, measures the
corrector, integrates the canonical equation and evaluates the twelve
acceptance criteria. Every artifact goes to one run directory.
"""

from __future__ import annotations

import math
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import corrector as corr
from . import dynamics as dyn
from . import io
from .coefficients import validate_assumptions
from .direct import DirectSolver, mass_fraction_outside
from .eigen import EigenSolver, identity_residuals
from .errors import RenewalHJError
from .hj import HJSolver, sup_and_argmax

CRITERIA = {
    1: "eigen identities",
    2: "dual identities",
    3: "concavity margin",
    4: "HJ monitors",
    5: "epsilon-convergence of U",
    6: "constraint emergence",
    7: "corrector uniform bounds",
    8: "concentration",
    9: "canonical equation",
    10: "single-trait equilibrium",
    11: "Cesaro bounds",
    12: "determinism",
}


@dataclass
class CriterionResult:
    number: int
    title: str
    status: str
    measured: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def as_dict(self):
        return {"number": self.number, "title": self.title, "status": self.status,
                "measured": self.measured, "detail": self.detail}


@dataclass
class RunReport:
    scenario: str
    criteria: list
    validation: dict
    monitors: dict
    diagnostics: dict
    hard_errors: list
    files: list = field(default_factory=list)
    out_dir: str | None = None

    def criterion(self, k):
        return next(c for c in self.criteria if c.number == k)

    @property
    def passed(self):
        return not self.hard_errors and all(c.status != "fail" for c in self.criteria)

    def as_dict(self):
        return {
            "format": io.FORMAT_TAG,
            "scenario": self.scenario,
            "passed": self.passed,
            "criteria": [c.as_dict() for c in self.criteria],
            "validation": self.validation,
            "monitors": self.monitors,
            "diagnostics": self.diagnostics,
            "hard_errors": self.hard_errors,
            "files": self.files,
        }

    def summary_lines(self):
        out = []
        for c in self.criteria:
            tag = {"pass": "PASS", "fail": "FAIL"}.get(c.status, "SKIP")
            out.append(f"[{tag}] {c.number:2d} {c.title}: {c.detail}")
        return out


# ---------------------------------------------------------------------------
# model assembly


@dataclass
class Model:
    """Solver-ready objects built from a :class:`ScenarioConfig`."""

    config: object
    coeffs: object
    kernel: object
    bounds: object
    init: object
    trait: object
    limit_trait: object
    _direct: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, config):
        return cls(config, config.build_coefficients(), config.build_kernel(),
                   config.build_bounds(), config.build_initial(), config.trait_grid(),
                   config.limit_grid())

    def validate(self, strict=True):
        return validate_assumptions(self.coeffs, self.kernel, self.bounds, self.init,
                                    self.config.grid_spec(), epsilons=self.config.epsilons,
                                    t_final=self.config.t_final, strict=strict)

    def eigen(self):
        g = self.config.grid
        return EigenSolver(self.coeffs, self.bounds, n_birth=g["n_birth"],
                           x_cap_factor=g["x_cap_factor"], dy=min(self.trait.spacing))

    def hj_solver(self, epsilon, constants, trait=None):
        trait = self.trait if trait is None else trait
        return HJSolver(self.coeffs, self.kernel, self.bounds, trait, epsilon,
                        k0=self.bounds.k0 if self.bounds.k0 is not None else constants["k0_measured"],
                        lipschitz_growth=constants["lipschitz_growth"],
                        semiconvexity_C=constants["semiconvexity_C"])

    def direct_solver(self, epsilon):
        """Cached per epsilon; building one sizes the age grid, which is not free."""
        if epsilon not in self._direct:
            g = self.config.grid
            self._direct[epsilon] = DirectSolver(self.coeffs, self.kernel, self.bounds, self.trait,
                                                 epsilon, dx=g["dx"], n_birth=g["n_birth"])
        return self._direct[epsilon]

    def U0(self, trait=None):
        trait = self.trait if trait is None else trait
        return np.asarray(self.init.U0(trait.mesh()), dtype=float).reshape(trait.shape)

    def gamma0(self):
        return np.asarray(self.init.gamma0(self.trait.mesh()), dtype=float).reshape(self.trait.shape)


def run_hj(model, epsilon, constants, t_final=None, frame_dt=None, trait=None):
    cfg = model.config
    trait = trait if trait is not None else (model.limit_trait if epsilon == 0 else model.trait)
    solver = model.hj_solver(epsilon, constants, trait)
    return solver, solver.run(model.U0(trait), t_final or cfg.t_final,
                              frame_dt=frame_dt or cfg.grid["frame_dt"])


def run_direct(model, epsilon, t_final=None, snapshot_times=None):
    cfg = model.config
    t_final = t_final or cfg.t_final
    snaps = snapshot_times if snapshot_times is not None else (0.5 * t_final, t_final)
    solver = model.direct_solver(epsilon)
    return solver, solver.run(model.U0(), model.gamma0(), t_final, frame_dt=cfg.grid["frame_dt"],
                              snapshot_times=snaps,
                              radius=cfg.acceptance["concentration_radius"])


def _sweep_member(args):
    """One epsilon of the sweep; rebuilt from the config so it can run in a worker."""
    config, epsilon, constants, with_hj = args[:4]
    model = args[4] if len(args) > 4 else Model.build(config)
    hj_run = run_hj(model, epsilon, constants)[1] if with_hj else None
    direct_run = run_direct(model, epsilon)[1]
    return epsilon, hj_run, direct_run


def sweep(model, constants, workers=1, with_hj=True):
    jobs = [(model.config, eps, constants, with_hj) for eps in model.config.epsilons]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(j + (model,)) for j in jobs]
    return {eps: (h, d) for eps, h, d in results}


# ---------------------------------------------------------------------------
# measurements


def eigen_samples(model, solver):
    """Identity residuals on the ``k x k`` (y, eta) sample; rows and worst values."""
    acc = model.config.acceptance
    k = int(acc["eigen_samples"])
    if model.trait.size == 1:
        ys = model.trait.points()
    else:
        lo, hi = acc["window_y"]
        box_lo = np.array(model.trait.lo)
        box_hi = np.array(model.trait.hi)
        a = np.maximum(np.full(model.trait.n, lo), box_lo)
        b = np.minimum(np.full(model.trait.n, hi), box_hi)
        ts = np.linspace(0.0, 1.0, k)
        if model.trait.n == 1:
            ys = (a + ts[:, None] * (b - a))
        else:
            side = int(max(2, round(math.sqrt(k))))
            g = np.linspace(0.0, 1.0, side)
            ys = np.array([[a[0] + u * (b[0] - a[0]), a[1] + v * (b[1] - a[1])] for u in g for v in g])
    band_lo, band_hi = solver.field(ys).eta_band()
    fracs = np.linspace(0.02, 0.98, k)
    rows, res = [], []
    for i, y in enumerate(ys):
        for f in fracs:
            eta = float(band_lo[i] + f * (band_hi[i] - band_lo[i]))
            r = identity_residuals(solver, y, eta)
            grad = solver.bundle(y, eta).grad_y_lambda
            rows.append((*y, eta, r.lam, r.margin, *grad, r.implicit, r.dlambda_fd_rel,
                         r.alternative, r.phi0, r.q_phi, r.q_dphi, r.dual_slope_literal,
                         r.dual_slope_corrected, r.cauchy_schwarz))
            res.append(r)
    header = ([f"y{i}" for i in range(model.trait.n)] + ["eta", "lambda", "margin"]
              + [f"grad_y{i}_lambda" for i in range(model.trait.n)]
              + ["implicit_residual", "dlambda_fd_rel", "alternative_residual", "phi0_residual",
                 "q_phi_residual", "int_q_dphi", "dual_slope_literal", "dual_slope_corrected",
                 "cauchy_schwarz"])
    return header, rows, res


def _interp_to(U_fine, fine, coarse):
    if fine.shape == coarse.shape:
        return U_fine
    interp = RegularGridInterpolator(tuple(fine.axes), U_fine, method="linear")
    return interp(coarse.points()).reshape(coarse.shape)


def u_gap(model, hj_eps, hj_lim):
    acc = model.config.acceptance
    t0, t1 = acc["window_t"]
    mask = model.trait.window_mask(*acc["window_y"])
    gap = 0.0
    for f in hj_eps.frames:
        if f.t < t0 - 1e-9 or f.t > t1 + 1e-9:
            continue
        lim = _interp_to(hj_lim.frame_at(f.t).U, model.limit_trait, model.trait)
        gap = max(gap, float(np.max(np.abs(f.U - lim)[mask])))
    return gap


def boundary_clearance(model, runs):
    """Smallest (distance of the argmax to the box edge) minus the required clearance."""
    tr = model.trait
    if tr.periodic or tr.size == 1:
        return math.inf
    radius = max(model.kernel.truncation_radius()) if model.kernel.kind != "dirac" else 0.0
    need_factor = float(model.config.acceptance["boundary_radii"]) * radius
    worst = math.inf
    for eps, run in runs:
        need = need_factor * eps
        for f in run.frames:
            y = sup_and_argmax(f.U, run.trait)[1]
            dist = min(min(y - np.array(run.trait.lo)), min(np.array(run.trait.hi) - y))
            worst = min(worst, float(dist - need))
    return worst


def _status(ok):
    return "pass" if ok else "fail"


def _monotone_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# orchestration


def run_scenario(config, out_dir=None, workers=1, check_determinism=False):
    """Execute the full pipeline for ``config`` and write the run directory."""
    model = Model.build(config)
    wanted = set(config.criteria())
    results = {}
    diagnostics = {}
    hard = []

    validation = model.validate(strict=True)
    constants = validation.constants
    out = Path(out_dir or config.output or Path("runs") / config.name)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    (out / "config.toml").write_text(config.source_text or "")
    io.write_json(out / "config.json", config.to_dict())
    io.write_json(out / "validation.json", validation.as_dict())

    solver = model.eigen()
    eps_list = sorted(config.epsilons, reverse=True)

    # eigen identities ------------------------------------------------------
    if wanted & {1, 2, 3}:
        header, rows, res = eigen_samples(model, solver)
        io.write_csv(out / "eigen_table.csv", header, rows)
        worst = lambda name: float(max(getattr(r, name) for r in res))  # noqa: E731
        m1 = {"implicit": worst("implicit"), "dlambda_fd_rel": worst("dlambda_fd_rel"),
              "alternative": worst("alternative"), "samples": len(res)}
        results[1] = CriterionResult(1, CRITERIA[1], _status(
            m1["implicit"] <= 1e-9 and m1["dlambda_fd_rel"] <= 1e-6 and m1["alternative"] <= 1e-7),
            m1, f"|eta F - 1| {m1['implicit']:.2e}, FD {m1['dlambda_fd_rel']:.2e}, "
                f"alt {m1['alternative']:.2e}")
        m2 = {"phi0": worst("phi0"), "q_phi": worst("q_phi"),
              "dual_slope_literal": worst("dual_slope_literal"),
              "dual_slope_corrected": worst("dual_slope_corrected")}
        ok2 = m2["phi0"] <= 1e-8 and m2["q_phi"] <= 1e-8 and m2["dual_slope_literal"] <= 1e-6
        results[2] = CriterionResult(2, CRITERIA[2], _status(ok2), m2,
                                     f"Phi(0) {m2['phi0']:.2e}, int Q Phi {m2['q_phi']:.2e}, "
                                     f"int Q dPhi vs -L''/(2L') {m2['dual_slope_literal']:.2e} "
                                     f"(vs +L''/(2L') {m2['dual_slope_corrected']:.2e})")
        margin = worst("margin")
        m3 = {"max_margin": margin, "delta": -margin, "cauchy_schwarz_max": worst("cauchy_schwarz")}
        results[3] = CriterionResult(3, CRITERIA[3], _status(margin < 0), m3,
                                     f"delta = {-margin:.4g}")

    # limit run ---------------------------------------------------------------
    needs_hj = bool(wanted & {4, 5, 6, 7, 8, 9})
    hj_lim = lim_solver = None
    if needs_hj:
        lim_solver, hj_lim = run_hj(model, 0.0, constants,
                                    frame_dt=config.dynamics["frame_dt"])
        _write_hj(out / "hj_limit", hj_lim, model.limit_trait)

    # epsilon sweep --------------------------------------------------------------
    runs = sweep(model, constants, workers=workers, with_hj=needs_hj)
    for eps in eps_list:
        h, d = runs[eps]
        tag = f"eps_{eps:g}"
        if h is not None:
            _write_hj(out / f"hj_{tag}", h, model.trait)
        _write_direct(out / f"direct_{tag}", d, model.trait)

    monitors = {}
    if needs_hj:
        monitors["limit"] = hj_lim.monitors.as_dict()
        monitors["limit"]["halt_reason"] = hj_lim.halt_reason
        for eps in eps_list:
            h = runs[eps][0]
            monitors[f"eps={eps:g}"] = dict(h.monitors.as_dict(), halt_reason=h.halt_reason)
        for name, m in monitors.items():
            if m["hard_breaches"]:
                hard.append(f"HJ run {name}: {m['hard_breaches']} hard monitor breaches")
            if m["halt_reason"]:
                hard.append(f"HJ run {name} halted: {m['halt_reason']}")

    # HJ monitors ---------------------------------------------------------------
    if 4 in wanted and needs_hj:
        all_runs = [("limit", hj_lim)] + [(f"eps={e:g}", runs[e][0]) for e in eps_list]
        hard_count = sum(r.monitors.hard_breaches for _, r in all_runs)
        halts = [n for n, r in all_runs if r.halt_reason]
        bracket = sum(1 for _, r in all_runs for b in r.monitors.breaches if b[0] == "dtU bracket")
        excess = max(r.monitors.bracket_excess / r.dt for _, r in all_runs)
        soft = {n: len(r.monitors.breaches) for n, r in all_runs}
        m4 = {"hard_breaches": hard_count, "halts": halts, "bracket_breaches": bracket,
              "bracket_excess_over_dt_max": excess, "soft_breaches": soft,
              "clamp_events": {n: r.monitors.clamp_count for n, r in all_runs}}
        results[4] = CriterionResult(4, CRITERIA[4], _status(
            hard_count == 0 and not halts and bracket == 0), m4,
            f"hard {hard_count}, bracket breaches {bracket}, soft {sum(soft.values())}")

    # convergence of U and constraint --------------------------------------------
    if 5 in wanted:
        gaps = [u_gap(model, runs[e][0], hj_lim) for e in eps_list]
        ratios = [b / a for a, b in zip(gaps, gaps[1:])]
        results[5] = CriterionResult(5, CRITERIA[5], _status(all(r <= 0.7 for r in ratios)),
                                     {"epsilons": eps_list, "gaps": gaps, "ratios": ratios},
                                     "gaps " + ", ".join(f"{g:.4g}" for g in gaps)
                                     + "; ratios " + ", ".join(f"{r:.3f}" for r in ratios))
    if 6 in wanted:
        t = config.t_final
        cgap = []
        for e in eps_list:
            h, d = runs[e]
            cgap.append(abs(d.frame_at(t).rho_integral - sup_and_argmax(h.frame_at(t).U, model.trait)[0]))
        results[6] = CriterionResult(6, CRITERIA[6], _status(_monotone_decreasing(cgap)),
                                     {"epsilons": eps_list, "gaps": cgap},
                                     "gaps " + ", ".join(f"{g:.4g}" for g in cgap))

    # corrector ---------------------------------------------------------------------
    if 7 in wanted:
        results[7], diagnostics["corrector"] = _corrector(model, solver, runs, eps_list, hj_lim,
                                                          lim_solver, constants, out)

    # concentration ---------------------------------------------------------------------
    if 8 in wanted:
        t = config.t_final
        ybar = sup_and_argmax(hj_lim.frame_at(t).U, model.limit_trait)[1]
        fr = []
        for e in eps_list:
            ds = model.direct_solver(e)
            f = runs[e][1].frame_at(t)
            fr.append(mass_fraction_outside(f.marginal, model.trait, ds.w_trait, ybar,
                                            config.acceptance["concentration_radius"]))
        results[8] = CriterionResult(8, CRITERIA[8], _status(_monotone_decreasing(fr)),
                                     {"y_bar": ybar, "epsilons": eps_list, "fractions": fr},
                                     "outside fraction " + ", ".join(f"{v:.4g}" for v in fr))

    # dynamics --------------------------------------------------------------------------
    if 9 in wanted:
        results[9], diagnostics["dynamics"] = _dynamics(model, solver, hj_lim, runs, eps_list, out)

    # single-trait equilibrium ------------------------------------------------------------
    if 10 in wanted:
        y = model.trait.points()[0]
        lam = solver.lam(y, 1.0)
        tol = float(config.acceptance["equilibrium_tol"])
        gaps = [abs(runs[e][1].frames[-1].rho + lam) for e in eps_list]
        results[10] = CriterionResult(10, CRITERIA[10], _status(max(gaps) <= tol),
                                      {"minus_lambda": -lam, "rho_final": [runs[e][1].frames[-1].rho
                                                                           for e in eps_list],
                                       "gaps": gaps},
                                      f"|rho - (-Lambda)| = {max(gaps):.3g}")

    # Cesaro bounds -------------------------------------------------------------------------
    if 11 in wanted:
        lo, hi = -config.build_bounds().lambda_upper, -config.build_bounds().lambda_lower
        vals = {}
        ok = True
        for e in eps_list:
            d = runs[e][1]
            for t in config.acceptance["cesaro_times"]:
                if t > config.t_final + 1e-9:
                    continue
                v = d.frame_at(t).rho_integral / t
                vals[f"eps={e:g},t={t:g}"] = v
                ok = ok and lo <= v <= hi
        results[11] = CriterionResult(11, CRITERIA[11], _status(ok),
                                      {"bracket": [lo, hi], "values": vals},
                                      f"range [{min(vals.values()):.4g}, {max(vals.values()):.4g}]"
                                      f" in [{lo:.4g}, {hi:.4g}]")

    # boundary clearance (hard) --------------------------------------------------------------
    if needs_hj:
        clear = boundary_clearance(model, [(e, runs[e][0]) for e in eps_list]
                                   + [(max(eps_list), hj_lim)])
        diagnostics["boundary_clearance"] = clear
        if clear < 0:
            hard.append(f"argmax closer to the trait boundary than the required clearance "
                        f"(short by {-clear:.4g})")

    # determinism ---------------------------------------------------------------------------------
    if 12 in wanted and check_determinism:
        other = 4 if workers == 1 else 1
        with tempfile.TemporaryDirectory() as tmp:
            run_scenario(config.with_overrides(acceptance={**config.acceptance,
                                                           "criteria": sorted(wanted - {12})}),
                         Path(tmp) / "rerun", workers=other)
            a = {k: v for k, v in io.csv_digests(out).items()}
            b = io.csv_digests(Path(tmp) / "rerun")
        same = a == b
        results[12] = CriterionResult(12, CRITERIA[12], _status(same),
                                      {"files": len(a), "workers": [workers, other]},
                                      f"{len(a)} CSV files identical" if same else "CSV digests differ")

    criteria = []
    for k in sorted(CRITERIA):
        if k in results:
            criteria.append(results[k])
        else:
            why = "not applicable to this scenario" if k not in wanted else "not requested"
            criteria.append(CriterionResult(k, CRITERIA[k], "skipped", {}, why))
    report = RunReport(config.name, criteria, validation.as_dict(), monitors, diagnostics, hard,
                       out_dir=str(out))
    io.write_json(out / "report.json", report.as_dict())
    io.write_manifest(out)
    report.files = [e["path"] for e in io.read_json(out / "manifest.json")["files"]]
    return report


# ---------------------------------------------------------------------------
# pieces


def corrector_setup(model, solver, constants):
    """Initial gamma bracket, transport constant ``K`` and the global eta band."""
    cfg = model.config
    g0 = model.gamma0()
    g_lo = cfg.initial.get("gamma0_lower", float(g0.min()))
    g_hi = cfg.initial.get("gamma0_upper", float(g0.max()))
    fl = solver.field(model.trait.points())
    band_lo, band_hi = fl.eta_band()
    K = corr.bracket_constant(float(band_lo.min()), fl.max_abs_dlam(), constants["K_transport"])
    return g_lo, g_hi, K, (float(band_lo.min()), float(band_hi.max()))


def _corrector(model, solver, runs, eps_list, hj_lim, lim_solver, constants, out):
    g_lo, g_hi, K, eta_band = corrector_setup(model, solver, constants)
    tv_lim = hj_lim.monitors.eta_dt_accum
    fixed = (g_lo * math.exp(-2 * K * tv_lim), g_hi * math.exp(2 * K * tv_lim))
    rows, per_eps = [], {}
    brackets, xints = [], []
    for e in eps_list:
        h, d = runs[e]
        ds = model.direct_solver(e)
        diag = corr.check_gamma_bounds(ds, d, h, h.monitors.eta_tv_accum, g_lo, g_hi, K,
                                       tv_sup=h.monitors.eta_dt_accum, eta_band=eta_band)
        per_eps[f"eps={e:g}"] = diag.as_dict()
        brackets.append(diag.bracket)
        xints.append(diag.x_integral_range)
        for t, a, b in zip(diag.times, diag.gamma_min, diag.gamma_max):
            rows.append((e, t, a, b))
        Qlo, Qhi = corr.envelopes(ds, fixed[0], fixed[1], eta_band[0], eta_band[1], ds.bounds)
        per_eps[f"eps={e:g}"]["p_integral_bounds"] = [float(np.min(Qlo @ ds.w_age)),
                                                      float(np.max(Qhi @ ds.w_age))]
    io.write_csv(out / "corrector_bracket.csv", ("epsilon", "t", "gamma_min", "gamma_max"), rows)
    p_lo = min(v["p_integral_bounds"][0] for v in per_eps.values())
    p_hi = max(v["p_integral_bounds"][1] for v in per_eps.values())
    inside = all(fixed[0] <= a and b <= fixed[1] for a, b in brackets)
    xin = all(p_lo <= a and b <= p_hi for a, b in xints) and p_lo > 0
    gamma_lim = corr.solve_gamma(lim_solver, hj_lim, np.full(model.limit_trait.shape, 1.0))
    measured = {"fixed_interval": list(fixed), "brackets": [list(b) for b in brackets],
                "x_integral_ranges": [list(x) for x in xints], "p_integral_bounds": [p_lo, p_hi],
                "K": K, "limit_tv": tv_lim, "gamma_saturation_time": gamma_lim.saturation_time,
                "per_epsilon": per_eps}
    detail = (f"gamma in [{min(b[0] for b in brackets):.4g}, {max(b[1] for b in brackets):.4g}] "
              f"within [{fixed[0]:.4g}, {fixed[1]:.4g}]; int p in "
              f"[{min(x[0] for x in xints):.4g}, {max(x[1] for x in xints):.4g}] within "
              f"[{p_lo:.4g}, {p_hi:.4g}]")
    return CriterionResult(7, CRITERIA[7], _status(inside and xin), measured, detail), per_eps


def _dynamics(model, solver, hj_lim, runs, eps_list, out):
    cfg = model.config
    dcfg = cfg.dynamics
    traj = dyn.integrate_canonical(hj_lim, solver, model.kernel,
                                   t_final=dcfg["t_final"] or cfg.t_final, dt=dcfg["dt"])
    io.write_csv(out / "trajectory.csv",
                 ["t"] + [f"y_bar{i}" for i in range(model.trait.n)]
                 + ["rho", "lambda_at", "det_hessian", "halt_reason"], traj.rows())
    rep = dyn.compare_routes(traj, hj_lim, solver,
                             pop_runs={e: runs[e][1] for e in eps_list},
                             hj_eps_runs={e: runs[e][0] for e in eps_list})
    horizon = min(traj.halt_time if traj.halt_time is not None else 0.0,
                  float(cfg.acceptance["canonical_horizon"]))
    sel = rep.times <= horizon + 1e-9
    gap = float(np.max(rep.argmax_gap[sel])) if sel.any() else math.inf
    route_t = 0.5 * (rep.times[1:] + rep.times[:-1])
    rsel = route_t <= horizon + 1e-9
    route = float(np.max(rep.rho_route_gap[rsel])) if rsel.any() else 0.0
    tol = 2 * min(model.limit_trait.spacing)
    even = model.kernel.is_even
    cut = traj.times <= horizon + 1e-9
    rho, lam = traj.rho[cut], traj.lambda_at[cut]
    rho_v = float(max(0.0, np.max(rho[:-1] - rho[1:]))) if len(rho) > 1 else 0.0
    lam_v = float(max(0.0, np.max(lam[1:] - lam[:-1]))) if len(lam) > 1 else 0.0
    ok = (gap <= tol and rep.rho_lambda_defect <= 1e-3 and route <= 1e-3
          and (not even or (rho_v <= 1e-8 and lam_v <= 1e-8)))
    rows = []
    for k, t in enumerate(rep.times):
        rows.append((t, rep.argmax_gap[k], rep.eta_at_ybar_defect[k]))
    io.write_csv(out / "routes.csv", ("t", "argmax_gap", "eta_at_ybar_minus_1"), rows)
    measured = {"horizon": horizon, "halt_reason": traj.halt_reason, "argmax_gap_max": gap,
                "tolerance": tol, "rho_lambda_defect": rep.rho_lambda_defect,
                "rho_route_gap_max": route, "even_kernel": even,
                "rho_monotone_violation": rho_v, "lambda_monotone_violation": lam_v,
                "drho_relative_gap": rep.drho_relative_gap}
    detail = (f"|ybar - argmax U| <= {gap:.3g} (tol {tol:.3g}) up to t = {horizon:g}; "
              f"|rho - d sup U/dt| {route:.2g}")
    return CriterionResult(9, CRITERIA[9], _status(ok), measured, detail), rep.as_dict()


def _write_hj(path, run, trait):
    path.mkdir(parents=True, exist_ok=True)
    head = ["t", "supU"] + [f"argmax{i}" for i in range(trait.n)] + list(run.ROW_HEADER[3:])
    io.write_csv(path / "steps.csv", head, run.rows)
    io.write_grid_csv(path / "U_final.csv", trait, run.frames[-1].U, "U")
    io.write_frames_csv(path / "U_frames.csv", [f.t for f in run.frames], [f.U for f in run.frames], "U")
    io.write_frames_csv(path / "eta_frames.csv", [f.t for f in run.frames],
                        [f.eta for f in run.frames], "eta")
    io.write_json(path / "run.json", {"epsilon": run.epsilon, "dt_min": run.dt,
                                      "halt_reason": run.halt_reason,
                                      "monitors": run.monitors.as_dict(),
                                      "clamp_events": [e.__dict__ for e in run.clamp_events]})


def _write_direct(path, run, trait, full=False):
    """Time series always; birth-window frames and snapshots only with ``full``."""
    path.mkdir(parents=True, exist_ok=True)
    head = ["t", "rho", "rho_integral"] + [f"centroid{i}" for i in range(trait.n)] + ["fraction_near_peak"]
    io.write_csv(path / "steps.csv", head, run.rows)
    io.write_csv(path / "frames.csv", ("t", "rho", "rho_integral"),
                 [(f.t, f.rho, f.rho_integral) for f in run.frames])
    io.write_frames_csv(path / "marginal_frames.csv", [f.t for f in run.frames],
                        [f.marginal for f in run.frames], "marginal")
    if full:
        io.write_frames_csv(path / "birth_window_frames.csv", [f.t for f in run.frames],
                            [f.m_birth for f in run.frames], "m")
        for f in run.frames:
            if f.m_full is not None:
                io.write_frames_csv(path / f"m_snapshot_t{f.t:g}.csv", [f.t], [f.m_full], "m")
    io.write_json(path / "run.json", {"epsilon": run.epsilon, "dt": run.dt, "i_bar": run.i_bar,
                                      "x": run.x.tolist(), "trait_shape": list(trait.shape)})


def load_hj_run(path, trait):
    """Rebuild an :class:`HJRun` (frames and monitors) from a recorded directory."""
    from .hj import HJFrame, HJRun, Monitors

    path = Path(path)
    meta = io.read_json(path / "run.json")
    times, Us = io.read_frames_csv(path / "U_frames.csv", trait.shape)
    _, etas = io.read_frames_csv(path / "eta_frames.csv", trait.shape)
    frames = [HJFrame(float(t), U, e, None) for t, U, e in zip(times, Us, etas)]
    mon = Monitors()
    names = {f.name for f in fields(Monitors)} - {"breaches"}
    for k, v in meta["monitors"].items():
        if k in names:
            setattr(mon, k, float(v) if isinstance(v, str) else v)
    return HJRun(float(meta["epsilon"]), trait, frames, [], mon, [], float(meta["dt_min"]),
                 meta.get("halt_reason", ""))


def load_direct_run(path, trait):
    """Rebuild a :class:`DirectRun` from a directory written with birth-window frames."""
    from .direct import DirectFrame, DirectRun

    path = Path(path)
    meta = io.read_json(path / "run.json")
    ib = int(meta["i_bar"])
    _, rows = io.read_csv(path / "frames.csv")
    _, marg = io.read_frames_csv(path / "marginal_frames.csv", trait.shape)
    bw = path / "birth_window_frames.csv"
    if not bw.exists():
        raise FileNotFoundError(f"{bw} missing; record the run with birth-window frames")
    _, mb = io.read_frames_csv(bw, trait.shape + (ib + 1,))
    frames = [DirectFrame(r[0], r[1], r[2], m, None, b) for r, m, b in zip(rows, marg, mb)]
    return DirectRun(float(meta["epsilon"]), trait, np.array(meta["x"]), ib, frames, [],
                     float(meta["dt"]))


__all__ = ["CRITERIA", "CriterionResult", "Model", "corrector_setup", "RunReport", "RenewalHJError", "load_direct_run",
           "load_hj_run", "run_direct", "run_hj", "run_scenario", "sweep"]
