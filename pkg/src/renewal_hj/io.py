"""Run-directory artifacts: CSV tables, JSON reports and the manifest.

Floats are written with ``repr``-exact ``.17g`` so that identical runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FORMAT_TAG = "renewal-hj-run/1"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """``(header, rows)`` with numeric cells parsed as floats."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            parsed = []
            for v in row:
                try:
                    parsed.append(float(v))
                except ValueError:
                    parsed.append(v)
            rows.append(parsed)
    return header, rows


def write_grid_csv(path, trait, values, name="U"):
    """One row per trait node: coordinates then ``values`` (one or more columns)."""
    pts = trait.points()
    vals = np.asarray(values, dtype=float).reshape(trait.size, -1)
    cols = [f"y{i}" for i in range(trait.n)]
    extra = [name] if vals.shape[1] == 1 else [f"{name}{j}" for j in range(vals.shape[1])]
    return write_csv(path, cols + extra, (list(p) + list(v) for p, v in zip(pts, vals)))


def write_frames_csv(path, times, fields, name="U"):
    """One row per frame: ``t`` then the flattened field."""
    fields = [np.asarray(f, dtype=float).ravel() for f in fields]
    header = ["t"] + [f"{name}_{i}" for i in range(len(fields[0]))]
    return write_csv(path, header, ([t, *f] for t, f in zip(times, fields)))


def read_frames_csv(path, shape):
    _, rows = read_csv(path)
    times = np.array([r[0] for r in rows])
    fields = [np.array(r[1:], dtype=float).reshape(shape) for r in rows]
    return times, fields


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir):
    """List every file in ``run_dir`` with size and SHA-256."""
    run_dir = Path(run_dir)
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = [{"path": str(p.relative_to(run_dir)), "bytes": p.stat().st_size, "sha256": sha256(p)}
               for p in files]
    return write_json(run_dir / "manifest.json", {"format": FORMAT_TAG, "files": entries})


def csv_digests(run_dir):
    """``{relative path: sha256}`` of every CSV below ``run_dir``."""
    run_dir = Path(run_dir)
    return {str(p.relative_to(run_dir)): sha256(p) for p in sorted(run_dir.rglob("*.csv"))}
