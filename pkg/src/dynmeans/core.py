"""Single-timestep Dynamic Means: label pass, parameter pass and the cost they descend.

Clusters come in three flavours while one batch is being clustered:

* instantiated clusters (:class:`ActiveCluster`), which own at least one
  point of the current batch,
* dormant clusters (:class:`OldClusterRecord`), seen in an earlier batch and
  revivable at a price that grows with the time they have been unobserved,
* the option of opening a brand-new cluster at cost ``lam``.

:func:`cluster_timestep` alternates :func:`assign_labels` and
:func:`assign_params` until the labelling stops changing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

#: Relative cost decrease below which the coordinate descent is declared converged.
REL_TOL = 1e-12
DEFAULT_MAX_ITERS = 100


class Decision(enum.IntEnum):
    """How an observation obtained its label during a label pass."""

    JOINED = 0
    REVIVED = 1
    CREATED = 2


class _NewCluster(enum.Enum):
    NEW = "new"

    def __repr__(self) -> str:
        return "NEW_CLUSTER"


#: Candidate sentinel standing for "open a new cluster" in :func:`label_cost`.
NEW_CLUSTER = _NewCluster.NEW


@dataclass(frozen=True)
class DynMeansParams:
    """Penalties of the Dynamic Means cost.

    Attributes:
        lam: cost of opening a new cluster.
        q_penalty: revival cost paid per timestep a cluster has been unobserved.
        tau: per-step growth of the positional uncertainty of a dormant cluster.
    """

    lam: float
    q_penalty: float
    tau: float

    def __post_init__(self):
        for name in ("lam", "q_penalty", "tau"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam!r}")
        if self.q_penalty <= 0:
            raise ValueError(f"q_penalty must be > 0, got {self.q_penalty!r}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau!r}")


@dataclass(frozen=True, eq=False)
class ActiveCluster:
    """A cluster holding points of the current batch.

    ``age`` is the number of steps the cluster was unobserved before this
    batch (0 for a cluster born in this batch); ``origin_center`` and
    ``origin_weight`` are its parameters as of its last observation.
    """

    id: int
    center: np.ndarray
    weight: float
    members: int
    age: int
    origin_center: np.ndarray
    origin_weight: float


@dataclass(frozen=True, eq=False)
class OldClusterRecord:
    """A dormant cluster: last known center and weight, ``age`` steps ago."""

    id: int
    age: int
    center: np.ndarray
    weight: float

    def __post_init__(self):
        if self.age < 1:
            raise ValueError(f"dormant cluster {self.id} needs age >= 1, got {self.age}")
        if not self.weight > 0:
            raise ValueError(f"dormant cluster {self.id} needs weight > 0, got {self.weight}")


@dataclass(frozen=True, eq=False)
class LabelAssignment:
    """Cluster id and :class:`Decision` for every observation of a batch."""

    ids: np.ndarray
    kinds: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls) -> "LabelAssignment":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8))


Candidate = Union[ActiveCluster, OldClusterRecord, _NewCluster]


class LabelPass(NamedTuple):
    labels: LabelAssignment
    active: list
    old: list
    next_id: int


class TimestepClustering(NamedTuple):
    """Outcome of :func:`cluster_timestep`.

    ``old`` holds the dormant records that were *not* revived, ``costs`` the
    cost after every iteration and ``next_id`` the first unused cluster id.
    """

    active: list
    labels: LabelAssignment
    cost: float
    iterations: int
    converged: bool
    costs: tuple
    old: list
    next_id: int


def as_batch(batch, dim: int | None = None) -> np.ndarray:
    """Coerce ``batch`` to a float64 ``(n, d)`` array; an empty batch may have any d."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.size == 0:
        if dim is None and arr.ndim == 2:
            dim = arr.shape[1]
        return np.empty((0, dim if dim is not None else 0), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"batch must be an (n, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"batch has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("batch contains non-finite coordinates")
    return arr


def sq_dist(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each row of ``points`` to ``center``."""
    diff = points - center
    return (diff * diff).sum(axis=-1)


def gamma(old_weight: float, age: int, tau: float) -> float:
    """Effective prior weight of a cluster's last center after ``age`` unobserved steps."""
    return 1.0 / (1.0 / old_weight + age * tau)


def label_cost(y, candidate: Candidate, params: DynMeansParams) -> float:
    """Cost of giving observation ``y`` to ``candidate``."""
    if candidate is NEW_CLUSTER:
        return float(params.lam)
    y = np.asarray(y, dtype=np.float64)
    d2 = float(sq_dist(y, candidate.center))
    if isinstance(candidate, OldClusterRecord):
        age = candidate.age
        return params.q_penalty * age + d2 / (params.tau * age + 1.0)
    return d2


def _check_order(scan_order, n: int) -> np.ndarray:
    if scan_order is None:
        return np.arange(n)
    order = np.asarray(scan_order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("scan_order must be a permutation of the batch indices")
    return order


def assign_labels(
    batch,
    active: Sequence[ActiveCluster],
    old: Sequence[OldClusterRecord],
    params: DynMeansParams,
    scan_order=None,
    next_id: int = 0,
) -> LabelPass:
    """One sequential label pass over ``batch``.

    Each observation, visited in ``scan_order``, takes the cheapest candidate
    among the instantiated clusters, the dormant records and a new cluster.
    Ties prefer instantiated over revived over new, then the smaller id.
    A revival or creation instantiates the cluster immediately from that single
    observation, so later observations in the pass already see it.

    Clusters left without members at the end of the pass are dropped; a
    dropped revival goes back to the dormant set unchanged.
    """
    Y = as_batch(batch)
    active = sorted(active, key=lambda c: c.id)
    old = sorted(old, key=lambda r: r.id)
    if len(Y) == 0:
        return LabelPass(LabelAssignment.empty(), active, old, next_id)
    return _label_pass(Y, active, old, params, _check_order(scan_order, len(Y)), next_id)


def _label_pass(Y, active, old, params, order, next_id) -> LabelPass:
    # active and old must arrive sorted by id
    n = len(Y)
    lam = params.lam
    inf = float("inf")
    # rows are plain lists: candidate sets are small and visited one point at a time
    centers = [c.center for c in active]
    col_ids = [c.id for c in active]
    # column -> ActiveCluster (pre-existing), OldClusterRecord (revived here) or None (created)
    sources: list = list(active)
    k = len(active)
    if k:
        diff = Y[:, None, :] - np.array(centers)[None, :, :]
        dist = (diff * diff).sum(axis=-1).tolist()
    else:
        dist = [[] for _ in range(n)]

    m = len(old)
    if m:
        old_centers = np.array([r.center for r in old], dtype=np.float64)
        old_ages = np.array([r.age for r in old], dtype=np.float64)
        diff = Y[:, None, :] - old_centers[None, :, :]
        old_cost = (
            params.q_penalty * old_ages
            + (diff * diff).sum(axis=-1) / (params.tau * old_ages + 1.0)
        ).tolist()

    cols = np.empty(n, dtype=np.int64)
    kinds = np.empty(n, dtype=np.int8)
    for i in order.tolist():
        row = dist[i]
        best = min(row) if k else inf
        old_best = inf
        if m:
            orow = old_cost[i]
            old_best = min(orow)

        if k and best <= old_best and best <= lam:
            if row.count(best) > 1:
                best_col = min((j for j in range(k) if row[j] == best), key=col_ids.__getitem__)
            else:
                best_col = row.index(best)
            cols[i] = best_col
            kinds[i] = Decision.JOINED
            continue
        y = Y[i]
        if m and old_best <= lam:
            # old records are sorted by id, so index() picks the smallest id on ties
            old_col = orow.index(old_best)
            rec = old[old_col]
            g = gamma(rec.weight, rec.age, params.tau)
            center = (rec.center * g + y) / (g + 1.0)
            col_ids.append(rec.id)
            sources.append(rec)
            for r in old_cost:
                r[old_col] = inf
            kinds[i] = Decision.REVIVED
        else:
            center = y
            col_ids.append(next_id)
            next_id += 1
            sources.append(None)
            kinds[i] = Decision.CREATED
        centers.append(center)
        for r, v in zip(dist, sq_dist(Y, center).tolist()):
            r.append(v)
        cols[i] = k
        k += 1

    counts = np.bincount(cols, minlength=k).tolist()
    revived_ids = set()
    new_active = []
    restored = []
    for col in range(k):
        src = sources[col]
        if counts[col] == 0:
            # only clusters carried in from an earlier iteration can end up empty
            if src.age > 0:
                restored.append(
                    OldClusterRecord(src.id, src.age, src.origin_center, src.origin_weight)
                )
            continue
        if isinstance(src, ActiveCluster):
            cluster = ActiveCluster(
                src.id, src.center, src.weight, counts[col],
                src.age, src.origin_center, src.origin_weight,
            )
        elif isinstance(src, OldClusterRecord):
            revived_ids.add(src.id)
            cluster = ActiveCluster(
                src.id, centers[col], gamma(src.weight, src.age, params.tau) + 1.0,
                counts[col], src.age, src.center, src.weight,
            )
        else:
            center = centers[col].copy()
            cluster = ActiveCluster(col_ids[col], center, 1.0, counts[col], 0, center, 1.0)
        new_active.append(cluster)

    remaining = [r for r in old if r.id not in revived_ids] + restored
    remaining.sort(key=lambda r: r.id)
    new_active.sort(key=lambda c: c.id)
    labels = LabelAssignment(np.array(col_ids, dtype=np.int64)[cols], kinds)
    return LabelPass(labels, new_active, remaining, next_id)


def member_stats(Y: np.ndarray, ids: np.ndarray):
    """Group rows of ``Y`` by ``ids``.

    Returns ``(uniq, inverse, counts, sums)``: the sorted distinct ids, the
    position of each row's id in ``uniq``, the member counts and the
    coordinate sums, accumulated in row order.
    """
    uniq, inverse = np.unique(ids, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq))
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(Y[order], starts, axis=0) if len(Y) else np.empty((0, Y.shape[1]))
    return uniq, inverse, counts, sums


def assign_params(
    batch,
    labels: LabelAssignment,
    active: Sequence[ActiveCluster],
    params: DynMeansParams,
) -> tuple[list, float]:
    """Recompute every active cluster's center and weight from its members.

    A cluster born in this batch sits at its member mean with weight equal to
    its member count. A revived cluster blends its last center, weighted by
    :func:`gamma`, with the member sum: ``(g * old + n * mean) / (g + n)``.

    Returns the updated clusters (sorted by id) and the cost at the new parameters.
    """
    Y = as_batch(batch)
    return _param_pass(Y, labels, sorted(active, key=lambda c: c.id), params)


def _param_pass(Y, labels, active, params):
    if not active:
        if len(labels):
            raise ValueError("labels refer to clusters missing from the active set")
        return [], 0.0
    uniq, inverse, counts, sums = member_stats(Y, labels.ids)
    ids = [c.id for c in active]
    if len(uniq) != len(ids) or uniq.tolist() != ids:
        missing = set(ids) - set(uniq.tolist())
        if missing:
            raise ValueError(f"clusters {sorted(missing)} have no members; drop them before assign_params")
        raise ValueError("labels refer to clusters missing from the active set")

    centers = sums / counts[:, None]
    weights = counts.astype(np.float64)
    gammas = np.zeros(len(active))
    revived = [j for j, c in enumerate(active) if c.age > 0]
    for j in revived:
        c = active[j]
        g = gamma(c.origin_weight, c.age, params.tau)
        gammas[j] = g
        centers[j] = (c.origin_center * g + sums[j]) / (g + counts[j])
        weights[j] = g + counts[j]

    updated = []
    for j, c in enumerate(active):
        center = centers[j]
        if c.age == 0:
            updated.append(ActiveCluster(c.id, center, weights[j].item(), int(counts[j]), 0, center, weights[j].item()))
        else:
            updated.append(
                ActiveCluster(c.id, center, weights[j].item(), int(counts[j]), c.age, c.origin_center, c.origin_weight)
            )
    sse = np.bincount(inverse, weights=sq_dist(Y, centers[inverse]), minlength=len(uniq))
    return updated, _total_cost(updated, sse, gammas, params)


def _total_cost(clusters, sse, gammas, params) -> float:
    total = 0.0
    for j, c in enumerate(clusters):
        if c.age == 0:
            total += params.lam + sse[j]
        else:
            prior = gammas[j] * float(sq_dist(c.center, c.origin_center))
            total += params.q_penalty * c.age + prior + sse[j]
    return float(total)


def compute_cost(
    active: Sequence[ActiveCluster],
    batch,
    labels: LabelAssignment,
    params: DynMeansParams,
) -> float:
    """Weighted-prior sum-of-squares cost of the current clustering.

    Per cluster: ``lam`` if it was born this batch, ``q_penalty * age``, the
    prior term ``gamma * |center - origin_center|^2`` and the squared distances
    of its members to its center.
    """
    if not active:
        return 0.0
    Y = as_batch(batch)
    active = sorted(active, key=lambda c: c.id)
    pos = {c.id: j for j, c in enumerate(active)}
    try:
        inverse = np.array([pos[i] for i in labels.ids.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} is not an active cluster") from None
    centers = np.array([c.center for c in active]).reshape(len(active), -1)
    sse = (
        np.bincount(inverse, weights=sq_dist(Y, centers[inverse]), minlength=len(active))
        if len(inverse)
        else np.zeros(len(active))
    )
    gammas = [gamma(c.origin_weight, c.age, params.tau) if c.age > 0 else 0.0 for c in active]
    return _total_cost(active, sse, gammas, params)


def cluster_timestep(
    batch,
    old: Sequence[OldClusterRecord],
    params: DynMeansParams,
    scan_order=None,
    max_iters: int = DEFAULT_MAX_ITERS,
    next_id: int = 0,
) -> TimestepClustering:
    """Cluster one batch given the dormant clusters carried over from the past.

    Alternates :func:`assign_labels` and :func:`assign_params`, reusing
    ``scan_order`` every iteration, and stops once the labels repeat, the
    relative cost decrease drops below :data:`REL_TOL`, or ``max_iters`` runs
    out (``converged`` is then False and the last iterate is returned).
    New clusters receive ids counting up from ``next_id``.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    Y = as_batch(batch)
    old = sorted(old, key=lambda r: r.id)
    if len(Y) == 0:
        return TimestepClustering([], LabelAssignment.empty(), 0.0, 1, True, (0.0,), old, next_id)
    order = _check_order(scan_order, len(Y))

    active: list = []
    dormant = old
    labels = None
    costs: list = []
    converged = False
    for _ in range(max_iters):
        step = _label_pass(Y, active, dormant, params, order, next_id)
        active, cost = _param_pass(Y, step.labels, step.active, params)
        dormant, next_id = step.old, step.next_id
        if labels is not None and (
            np.array_equal(step.labels.ids, labels.ids)
            or costs[-1] - cost <= REL_TOL * abs(costs[-1])
        ):
            converged = True
        labels = step.labels
        costs.append(cost)
        if converged:
            break
    return TimestepClustering(
        active, labels, costs[-1], len(costs), converged, tuple(costs), dormant, next_id
    )
