"""Run results and their on-disk layout.

A run directory holds ``summary.json``, ``particles.csv``,
``diagnostics.csv`` and, for ALFI runs, network checkpoints. Timing values
live under the ``timings`` key of ``summary.json`` so that everything else
in the file is reproducible byte for byte.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

TIMING_KEYS = ("timings",)


@dataclass
class RunResult:
    algorithm: str
    generator: str
    theta_hat: np.ndarray | None
    samples: np.ndarray
    weights: np.ndarray | None = None
    theta_star: np.ndarray | None = None
    performance: float | None = None
    n_simulations: int = 0
    timings: dict = field(default_factory=lambda: {"simulate": 0.0, "sample": 0.0, "optimize": 0.0})
    history: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    state: object = None

    def summary(self):
        doc = {
            "algorithm": self.algorithm,
            "generator": self.generator,
            "theta_hat": _list(self.theta_hat),
            "theta_star": _list(self.theta_star),
            "performance": self.performance,
            "n_simulations": int(self.n_simulations),
            "n_samples": int(len(self.samples)),
            "info": _jsonable(self.info),
            "timings": {k: float(v) for k, v in self.timings.items()},
        }
        return doc


def _list(x):
    return None if x is None else np.asarray(x, float).tolist()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def strip_timings(doc):
    return {k: v for k, v in doc.items() if k not in TIMING_KEYS}


def write_particles(result, path):
    d = result.samples.shape[1] if result.samples.ndim == 2 else 1
    history = result.history or [result.samples]
    weighted = result.weights is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "particle"] + [f"theta_{k}" for k in range(d)]
                   + (["weight"] if weighted else []))
        last = len(history) - 1
        for it, pts in enumerate(history):
            pts = np.asarray(pts, float).reshape(-1, d)
            for i, p in enumerate(pts):
                row = [it, i] + [repr(float(v)) for v in p]
                if weighted:
                    row.append(repr(float(result.weights[i])) if it == last else "")
                w.writerow(row)


def write_diagnostics(result, path):
    rows = result.diagnostics
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_run(result, out_dir, extra=None):
    """Persist ``result``; returns the summary document that was written."""
    os.makedirs(out_dir, exist_ok=True)
    doc = result.summary()
    if extra:
        doc.update(_jsonable(extra))
    dump_json(doc, os.path.join(out_dir, "summary.json"))
    write_particles(result, os.path.join(out_dir, "particles.csv"))
    write_diagnostics(result, os.path.join(out_dir, "diagnostics.csv"))
    state = result.state
    if state is not None and hasattr(state, "save"):
        state.save(out_dir)
    return doc


def write_grid_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_particles(path):
    """Return ``{iteration: array of shape (n, d)}`` from a particles.csv."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        keys = [k for k in reader.fieldnames if k.startswith("theta_")]
        for row in reader:
            out.setdefault(int(row["iteration"]), []).append([float(row[k]) for k in keys])
    return {k: np.asarray(v) for k, v in out.items()}
