"""Scenario configuration read from TOML.

A scenario file has top-level ``name``, ``epsilons`` and ``t_final`` plus the
tables ``[coefficients]``, ``[kernel]``, ``[bounds]``, ``[initial]``,
``[grid]`` and optionally ``[dynamics]``, ``[acceptance]`` and ``[output]``.
"""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .coefficients import (
    AssumptionBounds,
    GridSpec,
    coefficients_from_config,
    initial_from_config,
    kernel_from_config,
)
from .grid import TraitGrid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ALL_CRITERIA = tuple(range(1, 13))

GRID_DEFAULTS = {
    "n": 1,
    "y_lo": -3.0,
    "y_hi": 3.0,
    "dy": 0.01,
    "dy_limit": None,
    "dx": 0.025,
    "n_birth": 400,
    "x_cap_factor": 50.0,
    "frame_dt": 0.05,
    "periodic": False,
    "single": None,
}

DYNAMICS_DEFAULTS = {"dt": 0.005, "t_final": None, "frame_dt": 0.01}

ACCEPTANCE_DEFAULTS = {
    "criteria": list(ALL_CRITERIA),
    "window_t": [0.0, 1.0],
    "window_y": [-2.0, 2.0],
    "concentration_radius": 0.3,
    "cesaro_times": [0.5, 1.0],
    "canonical_horizon": 0.5,
    "eigen_samples": 21,
    "equilibrium_tol": 1e-3,
    "boundary_radii": 5.0,
}


class ScenarioError(ValueError):
    """Malformed scenario file."""


@dataclass
class ScenarioConfig:
    name: str
    coefficients: dict
    kernel: dict
    bounds: dict
    initial: dict
    grid: dict
    epsilons: list
    t_final: float
    dynamics: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    output: str | None = None
    description: str = ""
    base_dir: str | None = None
    source_text: str = ""

    # -- construction --------------------------------------------------------

    @classmethod
    def from_dict(cls, data, base_dir=None, source_text=""):
        data = copy.deepcopy(dict(data))
        missing = [k for k in ("name", "coefficients", "kernel", "bounds", "initial", "grid")
                   if k not in data]
        if missing:
            raise ScenarioError(f"scenario lacks {', '.join(missing)}")
        grid = {**GRID_DEFAULTS, **data["grid"]}
        unknown = set(data["grid"]) - set(GRID_DEFAULTS)
        if unknown:
            raise ScenarioError(f"unknown [grid] keys {sorted(unknown)}")
        acc = {**ACCEPTANCE_DEFAULTS, **data.get("acceptance", {})}
        dyn = {**DYNAMICS_DEFAULTS, **data.get("dynamics", {})}
        out = data.get("output", {})
        return cls(
            name=str(data["name"]),
            coefficients=dict(data["coefficients"]),
            kernel=dict(data["kernel"]),
            bounds=dict(data["bounds"]),
            initial=dict(data["initial"]),
            grid=grid,
            epsilons=[float(e) for e in data.get("epsilons", [0.2, 0.1, 0.05])],
            t_final=float(data.get("t_final", 1.0)),
            dynamics=dyn,
            acceptance=acc,
            output=out.get("dir") if isinstance(out, dict) else out,
            description=str(data.get("description", "")),
            base_dir=None if base_dir is None else str(base_dir),
            source_text=source_text,
        )

    @classmethod
    def load(cls, path):
        """Read a TOML file, or a bundled scenario by name."""
        p = Path(path)
        if not p.exists():
            bundled = bundled_path(str(path))
            if bundled is None:
                raise FileNotFoundError(f"no scenario file or bundled scenario {path!r}")
            p = bundled
        text = p.read_text()
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{p}: {exc}") from exc
        return cls.from_dict(data, base_dir=p.parent, source_text=text)

    def to_dict(self):
        return {
            "name": self.name,
            "description": self.description,
            "epsilons": list(self.epsilons),
            "t_final": self.t_final,
            "coefficients": self.coefficients,
            "kernel": self.kernel,
            "bounds": self.bounds,
            "initial": self.initial,
            "grid": self.grid,
            "dynamics": self.dynamics,
            "acceptance": self.acceptance,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_overrides(self, **changes):
        """Copy with top-level fields or ``grid.<key>`` style entries replaced."""
        new = copy.deepcopy(self)
        for key, value in changes.items():
            if value is None:
                continue
            if "." in key:
                table, sub = key.split(".", 1)
                getattr(new, table)[sub] = value
            else:
                setattr(new, key, value)
        return new

    # -- model objects --------------------------------------------------------

    @property
    def n(self):
        return int(self.grid["n"])

    def build_coefficients(self):
        return coefficients_from_config(self.coefficients, n=self.n, base_dir=self.base_dir)

    def build_kernel(self):
        return kernel_from_config(self.kernel, n=self.n)

    def build_bounds(self):
        return AssumptionBounds(**self.bounds)

    def build_initial(self):
        return initial_from_config(self.initial, n=self.n)

    def trait_grid(self, dy=None):
        g = self.grid
        if g["single"] is not None:
            return TraitGrid.single(g["single"])
        dy = g["dy"] if dy is None else dy
        n = self.n
        lo = _vector(g["y_lo"], n)
        hi = _vector(g["y_hi"], n)
        return TraitGrid.from_spacing(lo if n > 1 else lo[0], hi if n > 1 else hi[0], dy,
                                      periodic=bool(g["periodic"]))

    def limit_grid(self):
        return self.trait_grid(self.grid["dy_limit"] or self.grid["dy"])

    def grid_spec(self, dy=None):
        return GridSpec(self.trait_grid(dy), dx=self.grid["dx"], n_birth=self.grid["n_birth"],
                        dy_limit=self.grid["dy_limit"], x_cap_factor=self.grid["x_cap_factor"])

    def criteria(self):
        return [int(c) for c in self.acceptance["criteria"]]


def _vector(v, n):
    if isinstance(v, (list, tuple)):
        if len(v) != n:
            raise ScenarioError(f"expected {n} entries, got {v}")
        return [float(x) for x in v]
    return [float(v)] * n


def bundled_names():
    root = resources.files("renewal_hj") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_path(name):
    root = resources.files("renewal_hj") / "scenarios"
    for cand in (name, f"{name}.toml"):
        p = root / cand
        if p.is_file():
            return Path(str(p))
    return None


def load_scenario(path_or_name):
    return ScenarioConfig.load(path_or_name)
