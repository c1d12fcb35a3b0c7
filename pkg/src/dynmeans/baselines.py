"""DP-Means, the single-batch hard clustering that Dynamic Means reduces to."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_MAX_ITERS, REL_TOL, as_batch, member_stats, sq_dist


@dataclass(eq=False)
class DpMeansResult:
    labels: np.ndarray
    center_ids: np.ndarray
    centers: np.ndarray
    cost: float
    iterations: int
    converged: bool
    costs: tuple


def dp_means(points, lam: float, scan_order=None, max_iters: int = DEFAULT_MAX_ITERS) -> DpMeansResult:
    """DP-Means coordinate descent.

    Points are visited in ``scan_order``; a point joins its nearest center
    unless the squared distance exceeds ``lam``, in which case a center is
    opened at the point. Centers are then reset to their member means and
    centers that lost all members are dropped. Cost is
    ``lam * K + sum of squared distances``.

    Ties go to the existing center with the smaller id, and iteration stops
    under the same rules as :func:`dynmeans.core.cluster_timestep`, so the
    two agree exactly on a first batch.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    X = as_batch(points)
    n = len(X)
    if n == 0:
        return DpMeansResult(
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
            np.empty((0, X.shape[1])), 0.0, 1, True, (0.0,),
        )
    order = np.arange(n) if scan_order is None else np.asarray(scan_order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(n)):
        raise ValueError("scan_order must be a permutation of the point indices")

    ids: list = []
    centers: list = []
    next_id = 0
    labels = np.full(n, -1, dtype=np.int64)
    costs: list = []
    converged = False
    for _ in range(max_iters):
        previous = labels.copy()
        for i in order:
            x = X[i]
            if centers:
                d2 = sq_dist(np.array(centers), x)
                nearest = d2.min()
                if nearest <= lam:
                    labels[i] = min(cid for cid, v in zip(ids, d2) if v == nearest)
                    continue
            ids.append(next_id)
            centers.append(x)
            labels[i] = next_id
            next_id += 1

        uniq, inverse, counts, sums = member_stats(X, labels)
        ids = uniq.tolist()
        centers = list(sums / counts[:, None])
        sse = float(sq_dist(X, np.array(centers)[inverse]).sum())
        cost = lam * len(ids) + sse

        if costs and (np.array_equal(labels, previous) or costs[-1] - cost <= REL_TOL * abs(costs[-1])):
            converged = True
        costs.append(cost)
        if converged:
            break
    return DpMeansResult(
        labels, np.array(ids, dtype=np.int64), np.array(centers), costs[-1],
        len(costs), converged, tuple(costs),
    )
