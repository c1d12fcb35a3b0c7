"""Moving-Gaussian benchmark: drifting clusters on the unit square that die and get replaced."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SynthConfig:
    n_clusters: int = 5
    points_per_cluster: int = 15
    point_std: float = 0.05
    motion_std: float = 0.05
    death_prob: float = 0.05
    n_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 0:
            raise ValueError(f"n_clusters must be >= 0, got {self.n_clusters}")
        if self.points_per_cluster < 0:
            raise ValueError(f"points_per_cluster must be >= 0, got {self.points_per_cluster}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if not (self.point_std >= 0 and self.motion_std >= 0):
            raise ValueError("point_std and motion_std must be >= 0")
        if not 0.0 <= self.death_prob <= 1.0:
            raise ValueError(f"death_prob must lie in [0, 1], got {self.death_prob}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass
class Trajectory:
    """Path of one true cluster; ``centers[j]`` is its center at ``birth + j``."""

    birth: int
    centers: list = field(default_factory=list)
    died: bool = False

    @property
    def last(self) -> int:
        return self.birth + len(self.centers) - 1


@dataclass(eq=False)
class LabeledBatchSequence:
    batches: list
    labels: list
    trajectories: dict

    def __len__(self) -> int:
        return len(self.batches)

    def center_of(self, cluster_id: int, t: int) -> np.ndarray:
        traj = self.trajectories[cluster_id]
        return traj.centers[t - traj.birth]

    def centers_at(self, t: int) -> dict:
        return {
            cid: tr.centers[t - tr.birth]
            for cid, tr in self.trajectories.items()
            if tr.birth <= t <= tr.last
        }


def generate(cfg: SynthConfig) -> LabeledBatchSequence:
    """Sample the moving-Gaussian benchmark.

    Centers start uniform on [0,1]^2. Between steps each live cluster dies
    with probability ``death_prob``, otherwise its center takes an isotropic
    Gaussian step of std ``motion_std``; every death is replaced at once by
    a fresh cluster placed uniformly on the square, so the live count stays
    at ``n_clusters``. Each live cluster emits ``points_per_cluster`` points
    with isotropic std ``point_std``. Nothing is clipped to the square.
    """
    rng = np.random.default_rng(cfg.seed)
    trajectories: dict = {}
    live: list = []
    next_id = 0

    def spawn(t: int) -> None:
        nonlocal next_id
        trajectories[next_id] = Trajectory(birth=t, centers=[rng.uniform(0.0, 1.0, size=2)])
        live.append(next_id)
        next_id += 1

    batches, labels = [], []
    for t in range(cfg.n_steps):
        if t == 0:
            for _ in range(cfg.n_clusters):
                spawn(0)
        else:
            survivors = []
            for cid in live:
                traj = trajectories[cid]
                if rng.random() < cfg.death_prob:
                    traj.died = True
                else:
                    traj.centers.append(traj.centers[-1] + rng.normal(0.0, cfg.motion_std, size=2))
                    survivors.append(cid)
            n_dead = len(live) - len(survivors)
            live = survivors
            for _ in range(n_dead):
                spawn(t)
        centers = np.array([trajectories[cid].centers[-1] for cid in live]).reshape(-1, 2)
        k = cfg.points_per_cluster
        noise = rng.normal(0.0, cfg.point_std, size=(len(live) * k, 2))
        batches.append(np.repeat(centers, k, axis=0) + noise)
        labels.append(np.repeat(np.array(live, dtype=np.int64), k))
    return LabeledBatchSequence(batches, labels, trajectories)
