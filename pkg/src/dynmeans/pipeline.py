"""Sequential driver: clusters a list of batches, carrying dormant clusters forward."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .core import (
    DEFAULT_MAX_ITERS,
    ActiveCluster,
    DynMeansParams,
    OldClusterRecord,
    as_batch,
    cluster_timestep,
)


@dataclass(frozen=True)
class ReparamConfig:
    """Behavioural parameterization of Dynamic Means.

    ``n_q`` is the (possibly fractional) number of steps a cluster may stay
    unobserved and still be revived; ``k_tau * lam`` is the largest squared
    distance at which a point revives a cluster unobserved for one step.
    """

    lam: float
    n_q: float
    k_tau: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be > 0, got {self.lam!r}")
        if not (np.isfinite(self.n_q) and self.n_q > 1):
            raise ValueError(f"n_q must be > 1, got {self.n_q!r}")
        if not (np.isfinite(self.k_tau) and self.k_tau >= 1):
            raise ValueError(f"k_tau must be >= 1, got {self.k_tau!r}")


def reparameterize(cfg: ReparamConfig) -> DynMeansParams:
    """Map ``(lam, n_q, k_tau)`` to the penalties ``(lam, q_penalty, tau)``."""
    q_penalty = cfg.lam / cfg.n_q
    tau = (cfg.n_q * (cfg.k_tau - 1.0) + 1.0) / (cfg.n_q - 1.0)
    return DynMeansParams(cfg.lam, q_penalty, tau)


def resolve_params(params: Union[DynMeansParams, ReparamConfig]) -> DynMeansParams:
    if isinstance(params, ReparamConfig):
        return reparameterize(params)
    return params


def is_revivable(age: int, params: DynMeansParams) -> bool:
    """False once the revival penalty alone exceeds the new-cluster cost."""
    return age * params.q_penalty <= params.lam


def update_c(
    active: Sequence[ActiveCluster],
    old: Sequence[OldClusterRecord],
    params: DynMeansParams | None = None,
) -> list:
    """Dormant set for the next batch.

    Unrevived records age by one step; every active cluster becomes a record
    of age 1 holding its current center and weight. With ``params`` given,
    records that can no longer be revived are dropped.
    """
    active_ids = {c.id for c in active}
    clash = active_ids.intersection(r.id for r in old)
    if clash:
        raise ValueError(f"ids {sorted(clash)} are both active and dormant")
    records = [OldClusterRecord(r.id, r.age + 1, r.center, r.weight) for r in old]
    records += [OldClusterRecord(c.id, 1, c.center, c.weight) for c in active]
    if params is not None:
        records = [r for r in records if is_revivable(r.age, params)]
    records.sort(key=lambda r: r.id)
    return records


@dataclass(frozen=True)
class RunConfig:
    params: Union[DynMeansParams, ReparamConfig]
    restarts: int = 1
    max_iters: int = DEFAULT_MAX_ITERS
    seed: int = 0
    prune: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def resolved(self) -> DynMeansParams:
        return resolve_params(self.params)


@dataclass(eq=False)
class TimestepResult:
    t: int
    labels: np.ndarray
    kinds: np.ndarray
    clusters: tuple
    cost: float
    iterations: int
    converged: bool
    wall_time: float
    restart_costs: tuple
    restart: int


@dataclass
class Lineage:
    """When a cluster was born and every timestep at which it held points."""

    birth: int
    observed: list = field(default_factory=list)


@dataclass(eq=False)
class SequenceResult:
    params: DynMeansParams
    steps: list
    genealogy: dict
    dormant: list

    @property
    def labels(self) -> list:
        return [s.labels for s in self.steps]

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.steps)

    @property
    def wall_times(self) -> np.ndarray:
        return np.array([s.wall_time for s in self.steps])


def scan_permutation(seed: int, t: int, restart: int, n: int) -> np.ndarray:
    """Uniform permutation of ``range(n)`` keyed on ``(seed, t, restart)``."""
    return np.random.default_rng([seed, t, restart]).permutation(n)


def check_batches(batches) -> list:
    """Convert batches to float arrays, checking they share one dimension."""
    arrays = [np.asarray(b, dtype=np.float64) for b in batches]
    dims = {a.shape[1] for a in arrays if a.size and a.ndim == 2}
    if len(dims) > 1:
        raise ValueError(f"batches mix dimensions {sorted(dims)}")
    dim = dims.pop() if dims else None
    return [as_batch(a, dim) for a in arrays]


def run_sequence(batches, cfg: RunConfig) -> SequenceResult:
    """Run Dynamic Means over ``batches`` in order.

    Each timestep is clustered ``cfg.restarts`` times from the same dormant
    set with independent scan orders; the cheapest result (first on ties)
    proceeds and is folded into the dormant set by :func:`update_c`.
    """
    params = cfg.resolved
    arrays = check_batches(batches)
    dormant: list = []
    next_id = 0
    steps = []
    genealogy: dict = {}
    for t, Y in enumerate(arrays):
        best = None
        restart_costs = []
        elapsed = 0.0
        for r in range(cfg.restarts):
            order = scan_permutation(cfg.seed, t, r, len(Y))
            start = time.perf_counter()
            out = cluster_timestep(Y, dormant, params, order, cfg.max_iters, next_id)
            elapsed += time.perf_counter() - start
            restart_costs.append(out.cost)
            if best is None or out.cost < best[1].cost:
                best = (r, out)
        r, out = best
        for c in out.active:
            genealogy.setdefault(c.id, Lineage(birth=t)).observed.append(t)
        steps.append(
            TimestepResult(
                t=t,
                labels=out.labels.ids,
                kinds=out.labels.kinds,
                clusters=tuple(out.active),
                cost=out.cost,
                iterations=out.iterations,
                converged=out.converged,
                wall_time=elapsed,
                restart_costs=tuple(restart_costs),
                restart=r,
            )
        )
        next_id = out.next_id
        dormant = update_c(out.active, out.old, params if cfg.prune else None)
    return SequenceResult(params, steps, genealogy, dormant)
