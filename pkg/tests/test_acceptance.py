"""Acceptance suite: the twelve criteria on the bundled scenarios.

Runs each bundled scenario once (symmetric-gaussian also reruns itself at a
second worker count for the determinism check) and prints one line per
criterion. Takes about three minutes on a single core.

    pytest tests/test_acceptance.py -v -s
    python tests/test_acceptance.py
"""

import sys

import pytest

from renewal_hj import load_scenario, run_scenario
from renewal_hj.harness import CRITERIA

pytestmark = pytest.mark.slow

SCENARIOS = ["homogeneous", "symmetric-gaussian", "asymmetric-well", "single-trait"]
DETERMINISM = {"symmetric-gaussian"}

# criterion -> scenarios on which it must hold
WHERE = {
    1: ["symmetric-gaussian"],
    2: ["symmetric-gaussian", "homogeneous", "asymmetric-well", "single-trait"],
    3: ["symmetric-gaussian", "homogeneous", "asymmetric-well", "single-trait"],
    4: ["symmetric-gaussian", "asymmetric-well"],
    5: ["symmetric-gaussian", "asymmetric-well"],
    6: ["symmetric-gaussian", "asymmetric-well"],
    7: ["symmetric-gaussian", "asymmetric-well"],
    8: ["symmetric-gaussian", "asymmetric-well"],
    9: ["asymmetric-well"],
    10: ["single-trait"],
    11: SCENARIOS,
    12: ["symmetric-gaussian"],
}


@pytest.fixture(scope="module")
def reports(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_scenario(load_scenario(name), root / name,
                                       check_determinism=name in DETERMINISM)
        return cache[name]

    return get


def _line(k, results):
    ok = all(r.passed for _, r in results)
    parts = "; ".join(f"{name}: {r.detail}" for name, r in results)
    return ok, f"[{'PASS' if ok else 'FAIL'}] {k:2d} {CRITERIA[k]} | {parts}"


@pytest.mark.parametrize("k", sorted(WHERE))
def test_criterion(k, reports, capsys):
    results = [(name, reports(name).criterion(k)) for name in WHERE[k]]
    ok, line = _line(k, results)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


@pytest.mark.parametrize("name", SCENARIOS)
def test_no_hard_errors(name, reports):
    assert reports(name).hard_errors == []


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
