"""Line-delimited JSON formats read and written by the command-line tool.

Batch-sequence file, one record per timestep::

    {"t": 0, "points": [[0.1, 0.2], [0.3, 0.4]]}

Truth file, aligned with the batch file::

    {"t": 0, "labels": [3, 3], "centers": {"3": [0.2, 0.3]}}

Result file, a header record followed by one record per timestep::

    {"header": {"lam": ..., "q_penalty": ..., "tau": ..., ...}}
    {"t": 0, "labels": [...], "clusters": [{"id": 0, "center": [...], "weight": 2.0,
     "age": 0, "members": 2}], "cost": ..., "iterations": 2, "converged": true}

Floats are written with ``repr``, which round-trips doubles exactly.
Timings are not part of these files; see :func:`write_timing`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _records(path) -> Iterable:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON ({exc.msg})") from None


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def write_batches(path, batches, timesteps=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, batch in enumerate(batches):
            t = i if timesteps is None else int(timesteps[i])
            fh.write(_dumps({"t": t, "points": np.asarray(batch, dtype=float).tolist()}) + "\n")


def read_batches(path) -> tuple:
    """Read a batch-sequence file; returns ``(timesteps, batches)``."""
    timesteps, batches = [], []
    dim = None
    for lineno, rec in _records(path):
        if not isinstance(rec, dict) or "t" not in rec or "points" not in rec:
            raise FormatError(path, lineno, 'record needs "t" and "points"')
        t, points = rec["t"], rec["points"]
        if not isinstance(t, int) or isinstance(t, bool):
            raise FormatError(path, lineno, f"timestep index must be an integer, got {t!r}")
        if timesteps and t <= timesteps[-1]:
            raise FormatError(path, lineno, f"timestep {t} does not increase past {timesteps[-1]}")
        if not isinstance(points, list):
            raise FormatError(path, lineno, '"points" must be a list')
        for p in points:
            if not isinstance(p, list) or not p or not all(_is_number(x) for x in p):
                raise FormatError(path, lineno, "each point must be a non-empty list of finite numbers")
            if dim is None:
                dim = len(p)
            elif len(p) != dim:
                raise FormatError(path, lineno, f"point of dimension {len(p)}, expected {dim}")
        timesteps.append(t)
        batches.append(np.array(points, dtype=np.float64).reshape(len(points), dim or 0))
    if dim is not None:
        batches = [b.reshape(-1, dim) for b in batches]
    return timesteps, batches


def write_truth(path, data, timesteps=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, labels in enumerate(data.labels):
            t = i if timesteps is None else int(timesteps[i])
            centers = {str(cid): c.tolist() for cid, c in sorted(data.centers_at(i).items())}
            fh.write(_dumps({"t": t, "labels": labels.tolist(), "centers": centers}) + "\n")


def read_labels(path) -> tuple:
    """Per-timestep label arrays from a truth or result file: ``(timesteps, labels)``."""
    timesteps, labels = [], []
    for lineno, rec in _records(path):
        if not isinstance(rec, dict):
            raise FormatError(path, lineno, "record must be a JSON object")
        if "header" in rec:
            continue
        if "t" not in rec or "labels" not in rec:
            raise FormatError(path, lineno, 'record needs "t" and "labels"')
        lab = rec["labels"]
        if not isinstance(lab, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in lab):
            raise FormatError(path, lineno, '"labels" must be a list of integers')
        timesteps.append(rec["t"])
        labels.append(np.array(lab, dtype=np.int64))
    return timesteps, labels


@dataclass
class StoredStep:
    t: int
    labels: np.ndarray
    clusters: list
    cost: float
    iterations: int
    converged: bool


def step_record(t: int, step) -> dict:
    return {
        "t": t,
        "labels": step.labels.tolist(),
        "clusters": [
            {
                "id": c.id,
                "center": np.asarray(c.center).tolist(),
                "weight": float(c.weight),
                "age": c.age,
                "members": c.members,
            }
            for c in step.clusters
        ],
        "cost": float(step.cost),
        "iterations": step.iterations,
        "converged": bool(step.converged),
    }


def write_result(path, header: dict, result, timesteps) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"header": header}) + "\n")
        for t, step in zip(timesteps, result.steps):
            fh.write(_dumps(step_record(t, step)) + "\n")


def read_result(path) -> tuple:
    """Parse a result file back into ``(header, [StoredStep, ...])``."""
    header = None
    steps = []
    for lineno, rec in _records(path):
        if not isinstance(rec, dict):
            raise FormatError(path, lineno, "record must be a JSON object")
        if "header" in rec:
            header = rec["header"]
            continue
        try:
            steps.append(
                StoredStep(
                    t=rec["t"],
                    labels=np.array(rec["labels"], dtype=np.int64),
                    clusters=[
                        dict(c, center=np.array(c["center"], dtype=np.float64)) for c in rec["clusters"]
                    ],
                    cost=float(rec["cost"]),
                    iterations=int(rec["iterations"]),
                    converged=bool(rec["converged"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, lineno, f"bad result record ({exc})") from None
    if header is None:
        raise FormatError(path, None, "missing header record")
    return header, steps


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dumps(row) + "\n")


def write_timing(path, timesteps, wall_times) -> None:
    """Per-timestep clustering wall time in seconds, as CSV ``t,wall_time``."""
    write_csv(path, ["t", "wall_time"], [{"t": t, "wall_time": repr(float(w))} for t, w in zip(timesteps, wall_times)])


def read_timing(path) -> tuple:
    timesteps, times = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "wall_time"} <= set(reader.fieldnames):
            raise FormatError(path, 1, 'timing file needs columns "t" and "wall_time"')
        for lineno, row in enumerate(reader, start=2):
            try:
                timesteps.append(int(row["t"]))
                times.append(float(row["wall_time"]))
            except ValueError:
                raise FormatError(path, lineno, "bad timing row") from None
    return timesteps, np.array(times)
