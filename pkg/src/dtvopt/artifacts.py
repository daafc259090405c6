"""Run artifacts: the trajectory CSV, the meta JSON and the SVG figure."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .sim import METRICS, TrajectoryLog
from .svgplot import render_svg


def csv_header(n: int, m: int, order: int) -> list[str]:
    """``t``, then per agent its position, velocity (second order) and input
    components, then the optimum, then every metric. Agents count from 1.
    """
    cols = ["t"]
    groups = ("x", "v", "u") if order == 2 else ("x", "u")
    for i in range(1, n + 1):
        for grp in groups:
            cols += [f"{grp}{i}_{k}" for k in range(1, m + 1)]
    cols += [f"xstar_{k}" for k in range(1, m + 1)]
    cols += list(METRICS)
    return cols


def log_table(log: TrajectoryLog) -> np.ndarray:
    T, n, m = log.X.shape
    blocks = [log.X] if log.V is None else [log.X, log.V]
    blocks.append(log.U)
    per_agent = np.concatenate(blocks, axis=2).reshape(T, -1)
    mcols = np.column_stack([log.metrics[k] for k in METRICS])
    return np.column_stack([log.times, per_agent, log.xstar, mcols])


def _fmt(x: float) -> str:
    # repr round-trips exactly, which keeps reruns byte-identical
    return repr(float(x))


def write_csv(log: TrajectoryLog, path: str | Path) -> Path:
    path = Path(path)
    order = 1 if log.V is None else 2
    header = csv_header(log.n, log.m, order)
    table = log_table(log)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path: str | Path) -> dict:
    """Inverse of :func:`write_csv`: times, positions, optimum and metrics."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["t"]:
        raise ValueError(f"{path} is not a trajectory CSV (first column must be 't')")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    data = data.reshape(-1, len(header))
    col = {name: k for k, name in enumerate(header)}
    m = sum(1 for h in header if h.startswith("xstar_"))
    n = 0
    while f"x{n + 1}_1" in col:
        n += 1
    X = np.stack([data[:, [col[f"x{i}_{k}"] for k in range(1, m + 1)]]
                  for i in range(1, n + 1)], axis=1)
    xstar = data[:, [col[f"xstar_{k}"] for k in range(1, m + 1)]]
    metrics = {k: data[:, col[k]] for k in METRICS if k in col}
    return {"times": data[:, 0], "X": X, "xstar": xstar, "metrics": metrics, "header": header}


def write_svg(log: TrajectoryLog, path: str | Path, title: str = "") -> Path:
    path = Path(path)
    path.write_text(render_svg(log.times, log.X, log.xstar, log.metrics, title))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_meta(path: str | Path, meta: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return path
