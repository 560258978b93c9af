"""``renewal-hj`` command line interface.

Every subcommand reads a scenario (``--scenario``: a TOML path or a bundled
name) and writes into ``--out``. The exit code is 0 unless a hard error
occurred: failed validation, a solver exception, a hard HJ monitor breach or a
halted run. Failing acceptance criteria and soft monitor breaches are reported
but do not change the exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corrector as corr
from . import dynamics as dyn
from . import io
from .errors import RenewalHJError
from .harness import (
    Model,
    _write_direct,
    _write_hj,
    corrector_setup,
    load_direct_run,
    load_hj_run,
    run_direct,
    run_hj,
    run_scenario,
)
from .scenario import ScenarioConfig, bundled_names

log = logging.getLogger("renewal_hj")

DEFAULT_SCENARIO = "symmetric-gaussian"


# ---------------------------------------------------------------------------
# helpers


def _config(args, **overrides):
    cfg = ScenarioConfig.load(args.scenario)
    return cfg.with_overrides(**overrides)


def _out(args, default):
    out = Path(args.out) if args.out else Path("runs") / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out, cfg):
    """Config echo so that a run directory can be reloaded on its own."""
    io.write_json(out / "config.json", dict(cfg.to_dict(), base_dir=cfg.base_dir,
                                            format=io.FORMAT_TAG))
    if cfg.source_text:
        (out / "config.toml").write_text(cfg.source_text)


def _config_from_run(path):
    data = io.read_json(Path(path) / "config.json")
    return ScenarioConfig.from_dict(data, base_dir=data.get("base_dir"))


def _validated(cfg):
    model = Model.build(cfg)
    report = model.validate(strict=True)
    return model, report.constants


def _hj_hard_errors(run, name):
    errs = []
    if run.monitors.hard_breaches:
        errs.append(f"{name}: {run.monitors.hard_breaches} hard monitor breaches")
    if run.halt_reason:
        errs.append(f"{name} halted: {run.halt_reason}")
    return errs


def _finish(out, payload, errors):
    payload = dict(payload, hard_errors=errors, format=io.FORMAT_TAG)
    io.write_json(out / "summary.json", payload)
    io.write_manifest(out)
    for e in errors:
        print(f"hard error: {e}", file=sys.stderr)
    print(f"wrote {out}")
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    cfg = _config(args)
    model = Model.build(cfg)
    report = model.validate(strict=False)
    data = report.as_dict()
    print(json.dumps(io._jsonable(data), indent=2, sort_keys=True))
    if args.out:
        io.write_json(Path(args.out) / "validation.json", data)
    return 0 if report.passed else 1


def cmd_eigen_table(args):
    cfg = _config(args)
    model, _ = _validated(cfg)
    solver = model.eigen()
    tr = model.trait
    lo, hi = args.y_range if args.y_range else cfg.acceptance["window_y"]
    if tr.size == 1:
        ys = tr.points()
    elif tr.n == 1:
        ys = np.linspace(max(lo, tr.lo[0]), min(hi, tr.hi[0]), args.ny)[:, None]
    else:
        g0 = np.linspace(max(lo, tr.lo[0]), min(hi, tr.hi[0]), args.ny)
        g1 = np.linspace(max(lo, tr.lo[1]), min(hi, tr.hi[1]), args.ny)
        ys = np.array([[a, b] for a in g0 for b in g1])
    band_lo, band_hi = solver.field(ys).eta_band()
    fracs = np.linspace(0.02, 0.98, args.neta)
    rows = []
    for i, y in enumerate(ys):
        for f in fracs:
            eta = float(band_lo[i] + f * (band_hi[i] - band_lo[i]))
            b = solver.bundle(y, eta)
            margin = b.d2lambda_deta2 + b.dlambda_deta / eta
            rows.append((*y, eta, b.lam, b.dlambda_deta, *b.grad_y_lambda, margin))
    header = ([f"y{i}" for i in range(tr.n)] + ["eta", "lambda", "dlambda_deta"]
              + [f"grad_y{i}_lambda" for i in range(tr.n)] + ["margin"])
    out = _out(args, f"{cfg.name}-eigen")
    path = io.write_csv(out / "eigen_table.csv", header, rows)
    _echo_config(out, cfg)
    margin = max(r[-1] for r in rows)
    print(f"{len(rows)} rows; max margin {margin:.6g}")
    return _finish(out, {"command": "eigen-table", "rows": len(rows), "max_margin": margin,
                         "table": path.name}, [])


def _grid_overrides(args):
    ov = {}
    if getattr(args, "dy", None):
        ov["grid.dy"] = args.dy
        ov["grid.dy_limit"] = args.dy
    if getattr(args, "dx", None):
        ov["grid.dx"] = args.dx
    if getattr(args, "frame_dt", None):
        ov["grid.frame_dt"] = args.frame_dt
    return ov


def cmd_hj_run(args):
    cfg = _config(args, t_final=args.t_final, **_grid_overrides(args))
    model, constants = _validated(cfg)
    eps = float(args.epsilon)
    trait = model.limit_trait if eps == 0 else model.trait
    _, run = run_hj(model, eps, constants, trait=trait)
    out = _out(args, f"{cfg.name}-hj-eps{eps:g}")
    _write_hj(out, run, trait)
    _echo_config(out, cfg)
    U = run.frames[-1].U
    print(f"eps {eps:g}: t = {run.frames[-1].t:g}, sup U = {float(U.max()):.6g}, "
          f"hard breaches {run.monitors.hard_breaches}, soft {len(run.monitors.breaches)}")
    return _finish(out, {"command": "hj-run", "epsilon": eps, "monitors": run.monitors.as_dict()},
                   _hj_hard_errors(run, f"eps={eps:g}"))


def cmd_direct_run(args):
    cfg = _config(args, t_final=args.t_final, **_grid_overrides(args))
    model, _ = _validated(cfg)
    eps = float(args.epsilon)
    if eps <= 0:
        raise SystemExit("direct-run needs --epsilon > 0")
    snaps = tuple(args.snapshot_times) if args.snapshot_times else ()
    _, run = run_direct(model, eps, snapshot_times=snaps)
    out = _out(args, f"{cfg.name}-direct-eps{eps:g}")
    _write_direct(out, run, model.trait, full=True)
    _echo_config(out, cfg)
    last = run.frames[-1]
    print(f"eps {eps:g}: t = {last.t:g}, rho = {last.rho:.6g}, int rho = {last.rho_integral:.6g}")
    return _finish(out, {"command": "direct-run", "epsilon": eps, "rho_final": last.rho,
                         "rho_integral_final": last.rho_integral}, [])


def cmd_corrector_check(args):
    cfg = _config_from_run(args.direct_dir) if args.scenario is None else _config(args)
    model, constants = _validated(cfg)
    hj_meta = io.read_json(Path(args.hj_dir) / "run.json")
    d_meta = io.read_json(Path(args.direct_dir) / "run.json")
    if abs(float(hj_meta["epsilon"]) - float(d_meta["epsilon"])) > 1e-12:
        raise SystemExit("hj and direct runs use different epsilon")
    eps = float(d_meta["epsilon"])
    h = load_hj_run(args.hj_dir, model.trait)
    d = load_direct_run(args.direct_dir, model.trait)
    ds = model.direct_solver(eps)
    g_lo, g_hi, K, eta_band = corrector_setup(model, model.eigen(), constants)
    diag = corr.check_gamma_bounds(ds, d, h, h.monitors.eta_tv_accum, g_lo, g_hi, K,
                                   tv_sup=h.monitors.eta_dt_accum, eta_band=eta_band)
    out = _out(args, f"{cfg.name}-corrector-eps{eps:g}")
    io.write_csv(out / "gamma_bracket.csv", ("t", "gamma_min", "gamma_max"),
                 zip(diag.times, diag.gamma_min, diag.gamma_max))
    io.write_json(out / "corrector.json", dict(diag.as_dict(), epsilon=eps, K=K))
    _echo_config(out, cfg)
    print(f"eps {eps:g}: gamma in [{diag.bracket[0]:.6g}, {diag.bracket[1]:.6g}], "
          f"int p in [{diag.x_integral_range[0]:.6g}, {diag.x_integral_range[1]:.6g}]")
    return _finish(out, {"command": "corrector-check", "epsilon": eps,
                         "bracket": list(diag.bracket)}, [])


def cmd_dynamics_run(args):
    cfg = _config(args, **_grid_overrides(args))
    model, constants = _validated(cfg)
    t_final = args.t_final or cfg.dynamics["t_final"] or cfg.t_final
    frame_dt = args.frame_dt or cfg.dynamics["frame_dt"]
    _, hj_lim = run_hj(model, 0.0, constants, t_final=t_final, frame_dt=frame_dt)
    traj = dyn.integrate_canonical(hj_lim, model.eigen(), model.kernel, t_final=t_final,
                                   dt=args.dt or cfg.dynamics["dt"])
    out = _out(args, f"{cfg.name}-dynamics")
    io.write_csv(out / "trajectory.csv",
                 ["t"] + [f"y_bar{i}" for i in range(model.trait.n)]
                 + ["rho", "lambda_at", "det_hessian", "halt_reason"], traj.rows())
    _write_hj(out / "hj_limit", hj_lim, model.limit_trait)
    _echo_config(out, cfg)
    end = traj.times[-1] if len(traj.times) else 0.0
    print(f"integrated to t = {end:g}; halt: {traj.halt_reason or 'none'}")
    return _finish(out, {"command": "dynamics-run", "t_end": float(end),
                         "halt_reason": traj.halt_reason},
                   _hj_hard_errors(hj_lim, "limit"))


def cmd_run_scenario(args):
    cfg = _config(args)
    out = Path(args.out) if args.out else Path(cfg.output or Path("runs") / cfg.name)
    report = run_scenario(cfg, out, workers=args.workers,
                          check_determinism=args.check_determinism)
    for line in report.summary_lines():
        print(line)
    for e in report.hard_errors:
        print(f"hard error: {e}", file=sys.stderr)
    print(f"wrote {out}")
    return 1 if report.hard_errors else 0


def cmd_list(args):
    for name in bundled_names():
        print(name)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=argparse.SUPPRESS,
                        help="scenario TOML path or bundled name")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="worker processes for the epsilon sweep")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="renewal-hj", parents=[common],
                                description="Renewal equation / Hamilton-Jacobi limit solvers")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, "check the model assumptions and print the report")
    sp = add("eigen-table", cmd_eigen_table, "tabulate Lambda and its derivatives")
    sp.add_argument("--ny", type=int, default=21)
    sp.add_argument("--neta", type=int, default=21)
    sp.add_argument("--y-range", type=float, nargs=2, default=None)

    sp = add("hj-run", cmd_hj_run, "solve the HJ equation (epsilon 0 for the limit)")
    sp.add_argument("--epsilon", type=float, default=0.0)
    sp.add_argument("--t-final", type=float, default=None)
    sp.add_argument("--dy", type=float, default=None)
    sp.add_argument("--frame-dt", type=float, default=None)

    sp = add("direct-run", cmd_direct_run, "solve the renewal equation directly")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--t-final", type=float, default=None)
    sp.add_argument("--dx", type=float, default=None)
    sp.add_argument("--dy", type=float, default=None)
    sp.add_argument("--frame-dt", type=float, default=None)
    sp.add_argument("--snapshot-times", type=float, nargs="*", default=None)

    sp = add("corrector-check", cmd_corrector_check, "corrector diagnostics from recorded runs")
    sp.add_argument("--hj-dir", required=True)
    sp.add_argument("--direct-dir", required=True)

    sp = add("dynamics-run", cmd_dynamics_run, "integrate the canonical equation")
    sp.add_argument("--t-final", type=float, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--dy", type=float, default=None)
    sp.add_argument("--frame-dt", type=float, default=None)

    sp = add("run-scenario", cmd_run_scenario, "full pipeline with acceptance report")
    sp.add_argument("--check-determinism", action="store_true")

    add("list-scenarios", cmd_list, "print the bundled scenario names")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    defaults = {"scenario": None, "out": None, "workers": 1, "verbose": False}
    for k, v in defaults.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if args.scenario is None and args.command != "corrector-check":
        args.scenario = DEFAULT_SCENARIO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RenewalHJError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
