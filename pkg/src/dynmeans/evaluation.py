"""Clustering accuracy with and without cluster tracking across timesteps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class Matching(NamedTuple):
    pairs: list
    cost: float

    def as_dict(self) -> dict:
        return dict(self.pairs)


def optimal_matching(cost_matrix) -> Matching:
    """Minimum-cost one-to-one assignment between rows and columns.

    Works on rectangular matrices: every row is matched when there are no
    more rows than columns, and every column otherwise. ``pairs`` is a list
    of ``(row, col)`` sorted by row.
    """
    C = np.asarray(cost_matrix, dtype=np.float64)
    if C.size == 0:
        return Matching([], 0.0)
    if C.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(C)
    pairs = sorted(zip(rows.tolist(), cols.tolist()))
    return Matching(pairs, float(sum(C[r, c] for r, c in pairs)))


def contingency(learned, truth, weights=None):
    """Table of (summed weights of) points per (learned id, true id)."""
    learned = np.asarray(learned)
    truth = np.asarray(truth)
    if learned.shape != truth.shape:
        raise ValueError(f"{learned.size} learned labels for {truth.size} true labels")
    lids, li = np.unique(learned, return_inverse=True)
    tids, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((len(lids), len(tids)))
    np.add.at(table, (li, ti), 1.0 if weights is None else weights)
    return table, lids, tids


def _max_agreement(table) -> tuple:
    if table.size == 0:
        return 0.0, []
    m = optimal_matching(-table)
    return float(sum(table[r, c] for r, c in m.pairs)), m.pairs


@dataclass
class StepAccuracy:
    t: int
    n_points: int
    tracked: float
    untracked: float


@dataclass
class AccuracyReport:
    tracked_accuracy: float
    untracked_accuracy: float
    untracked_step_mean: float
    steps: list = field(default_factory=list)
    matches: dict = field(default_factory=dict)


def _check_sequences(learned, truth) -> tuple:
    learned = [np.asarray(a).reshape(-1) for a in learned]
    truth = [np.asarray(a).reshape(-1) for a in truth]
    if len(learned) != len(truth):
        raise ValueError(f"{len(learned)} learned timesteps for {len(truth)} true timesteps")
    for t, (a, b) in enumerate(zip(learned, truth)):
        if len(a) != len(b):
            raise ValueError(f"timestep {t}: {len(a)} learned labels for {len(b)} points")
    return learned, truth


def accuracy_report(learned: Sequence, truth: Sequence) -> AccuracyReport:
    """Tracked and untracked accuracy of per-timestep label arrays.

    Tracked accuracy matches learned ids to true ids once, over the table
    pooled across all timesteps, so a cluster that swaps identity midway
    is penalised. Untracked accuracy rematches every timestep and pools the
    agreed points; ``untracked_step_mean`` is the unweighted mean of the
    per-step fractions. Unmatched clusters score nothing.
    """
    learned, truth = _check_sequences(learned, truth)
    total = sum(len(a) for a in learned)
    if total == 0:
        raise ValueError("no labelled points to evaluate")
    all_l = np.concatenate(learned)
    all_t = np.concatenate(truth)
    table, lids, tids = contingency(all_l, all_t)
    agreed, pairs = _max_agreement(table)
    matches = {lids[r].item(): tids[c].item() for r, c in pairs}

    steps = []
    untracked_agreed = 0.0
    for t, (a, b) in enumerate(zip(learned, truth)):
        n = len(a)
        if n == 0:
            steps.append(StepAccuracy(t, 0, float("nan"), float("nan")))
            continue
        hits = sum(1 for x, y in zip(a.tolist(), b.tolist()) if matches.get(x, None) == y)
        step_agreed, _ = _max_agreement(contingency(a, b)[0])
        untracked_agreed += step_agreed
        steps.append(StepAccuracy(t, n, hits / n, step_agreed / n))
    fractions = [s.untracked for s in steps if s.n_points]
    return AccuracyReport(
        tracked_accuracy=agreed / total,
        untracked_accuracy=untracked_agreed / total,
        untracked_step_mean=float(np.mean(fractions)),
        steps=steps,
        matches=matches,
    )


def tracked_accuracy(result, truth) -> AccuracyReport:
    """:func:`accuracy_report` for a pipeline result against a labelled sequence."""
    return accuracy_report(result.labels, truth.labels)


def weighted_accuracy(labels, truth_labels, weights) -> float | None:
    """Confidence-weighted accuracy under the weight-maximising correspondence.

    Returns ``sum(w * correct) / sum(w)``, or None when every weight is zero
    and the ratio is undefined.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(w) != len(labels):
        raise ValueError(f"{len(w)} weights for {len(labels)} points")
    if np.any((w < 0) | (w > 1)) or not np.all(np.isfinite(w)):
        raise ValueError("weights must lie in [0, 1]")
    wsum = w.sum()
    if wsum == 0:
        return None
    table, _, _ = contingency(labels, truth_labels, w)
    agreed, _ = _max_agreement(table)
    return agreed / wsum


@dataclass
class TimingSummary:
    total: float
    mean: float
    std: float
    max: float


def summarize_times(times) -> TimingSummary:
    arr = np.asarray(times, dtype=np.float64)
    if arr.size == 0:
        return TimingSummary(0.0, 0.0, 0.0, 0.0)
    return TimingSummary(float(arr.sum()), float(arr.mean()), float(arr.std()), float(arr.max()))
