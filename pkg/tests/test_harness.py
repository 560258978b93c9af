import json

import numpy as np
import pytest

from renewal_hj import io
from renewal_hj.errors import AssumptionViolated
from renewal_hj.harness import CRITERIA, Model, run_scenario
from renewal_hj.scenario import ScenarioConfig, ScenarioError, bundled_names

TINY = """
name = "tiny"
epsilons = [0.2, 0.1]
t_final = 0.2

[coefficients]
kind = "compactified"
center = 0.3
b0 = 2.5
d0 = 1.0
d2 = 0.5

[kernel]
kind = "gaussian"
sigma = 0.5

[bounds]
lambda_lower = -6.0
lambda_upper = -0.09
k0 = 1.0

[initial]
U0 = "lipschitz-concave"
gamma0_level = 1.0
gamma0_lower = 1.0
gamma0_upper = 1.0

[grid]
y_lo = -5.0
y_hi = 5.0
dy = 0.05
dx = 0.05
n_birth = 100
frame_dt = 0.05

[dynamics]
frame_dt = 0.05
dt = 0.01

[acceptance]
criteria = [1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12]
eigen_samples = 3
cesaro_times = [0.1, 0.2]
canonical_horizon = 0.2
"""


@pytest.fixture
def tiny_path(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def test_bundled_scenarios_load():
    names = bundled_names()
    assert {"symmetric-gaussian", "asymmetric-well", "homogeneous", "single-trait"} <= set(names)
    for name in names:
        cfg = ScenarioConfig.load(name)
        assert cfg.name == name
        Model.build(cfg).validate(strict=True)


def test_unknown_grid_key(tiny_path):
    bad = tiny_path.read_text().replace("dx = 0.05", "dx = 0.05\nspacing = 3")
    tiny_path.write_text(bad)
    with pytest.raises(ScenarioError):
        ScenarioConfig.load(tiny_path)


def test_missing_table():
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"name": "x", "coefficients": {}, "kernel": {}})


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        ScenarioConfig.load("no-such-scenario")


def test_overrides(tiny_path):
    cfg = ScenarioConfig.load(tiny_path)
    new = cfg.with_overrides(**{"grid.dy": 0.1, "t_final": 0.5, "epsilons": None})
    assert new.grid["dy"] == 0.1 and new.t_final == 0.5
    assert cfg.grid["dy"] == 0.05 and new.epsilons == cfg.epsilons


def test_config_round_trips_through_json(tiny_path):
    cfg = ScenarioConfig.load(tiny_path)
    again = ScenarioConfig.from_dict(json.loads(cfg.to_json()))
    assert again.to_dict() == cfg.to_dict()


def test_nonnegative_fitness_bound_stops_before_solving(tiny_path, tmp_path):
    cfg = ScenarioConfig.load(tiny_path).with_overrides(
        bounds={"lambda_lower": -6.0, "lambda_upper": 0.5})
    with pytest.raises(AssumptionViolated):
        run_scenario(cfg, tmp_path / "out")
    assert not (tmp_path / "out").exists()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    p = d / "tiny.toml"
    p.write_text(TINY)
    cfg = ScenarioConfig.load(p)
    return cfg, run_scenario(cfg, d / "run", workers=1, check_determinism=True), d / "run"


def test_report_lists_every_criterion_once(tiny_run):
    _, rep, _ = tiny_run
    assert [c.number for c in rep.criteria] == sorted(CRITERIA)
    assert rep.criterion(10).status == "skipped"


def test_run_directory_is_self_describing(tiny_run):
    _, rep, out = tiny_run
    report = io.read_json(out / "report.json")
    assert report["format"] == io.FORMAT_TAG
    manifest = io.read_json(out / "manifest.json")
    listed = {e["path"] for e in manifest["files"]}
    for name in ("config.toml", "config.json", "report.json", "eigen_table.csv",
                 "hj_limit/U_frames.csv", "direct_eps_0.1/steps.csv", "trajectory.csv"):
        assert name in listed
    for e in manifest["files"]:
        assert io.sha256(out / e["path"]) == e["sha256"]


def test_determinism_across_worker_counts(tiny_run):
    _, rep, _ = tiny_run
    c = rep.criterion(12)
    assert c.status == "pass", c.detail


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, _, out = tiny_run
    run_scenario(cfg.with_overrides(acceptance={**cfg.acceptance, "criteria": [4, 5]}),
                 tmp_path / "a")
    run_scenario(cfg.with_overrides(acceptance={**cfg.acceptance, "criteria": [4, 5]}),
                 tmp_path / "b")
    assert io.csv_digests(tmp_path / "a") == io.csv_digests(tmp_path / "b")


def test_no_hard_errors_on_tiny_run(tiny_run):
    _, rep, _ = tiny_run
    assert rep.hard_errors == []
    assert rep.criterion(4).status == "pass"


def test_csv_round_trip_is_exact(tmp_path):
    vals = [0.1, 1 / 3, np.pi * 1e-300, -2.5e17]
    io.write_csv(tmp_path / "x.csv", ["a"], [[v] for v in vals])
    _, rows = io.read_csv(tmp_path / "x.csv")
    assert [r[0] for r in rows] == vals
