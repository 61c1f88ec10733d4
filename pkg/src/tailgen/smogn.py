"""Stage 1: neighbour-based synthesis of rare rows.

Each rare seed spawns synthetic joint rows from its k nearest rare
neighbours (Euclidean distance over features only). A chosen neighbour
closer than d_star (half the median of the seed's distances to every
other rare row) yields a linear interpolation with one shared u ~ U(0,1)
across features and target; a farther one yields Gaussian jitter around
the seed with sigma = min(jitter_cap, d_star). Distances and jitter are
meant to be computed in scaled units.

Every emitted row logs its draw metadata (neighbour, distance, d_star,
u or sigma) so the branch rule stays auditable after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, RngStream
from .errors import EmptyRareSet, NotEnoughNeighbours, RareSetTooSmall
from .relevance import RelevanceFn, partition_rare

INTERPOLATED = "interpolated"
JITTERED = "jittered"
REFINED = "refined"
NOISE_SEEDED = "noise_seeded"

DEFAULT_JITTER_CAP = 0.02
MAX_AUTO_PER_SEED = 10


@dataclass(frozen=True)
class SmognParams:
    """Knobs for the Stage-1 oversampler.

    per_seed None means "balance": the smallest count that lifts
    rare + synthetic to at least the normal-set size, capped at 10.
    """

    k: int = 5
    per_seed: int | None = None
    t_r: float = 0.8
    jitter_cap: float = DEFAULT_JITTER_CAP

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.per_seed is not None and self.per_seed < 1:
            raise ValueError(f"per_seed must be >= 1, got {self.per_seed}")
        if not 0.0 < self.t_r < 1.0:
            raise ValueError(f"t_r must be in (0,1), got {self.t_r}")


@dataclass(frozen=True)
class DrawLog:
    """Per-row draw metadata, parallel to the pool rows."""

    neighbor_index: np.ndarray  # rare-set row index of the drawn neighbour, -1 if n/a
    neighbor_distance: np.ndarray
    d_star: np.ndarray
    interp_u: np.ndarray  # nan for jittered rows
    sigma: np.ndarray  # nan for interpolated rows


@dataclass(frozen=True)
class SyntheticPool:
    """Joint (features, target) rows plus per-row provenance.

    seed_index points at the originating rare-set row; -1 marks rows that
    started from pure noise instead of a rare seed.
    """

    rows: np.ndarray
    provenance: np.ndarray
    seed_index: np.ndarray
    draws: DrawLog | None = field(default=None, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("pool rows must be a 2-D matrix")
        if not np.all(np.isfinite(rows)):
            raise ValueError("pool rows contain non-finite entries")
        prov = np.asarray(self.provenance)
        seed_idx = np.asarray(self.seed_index, dtype=np.int64)
        if prov.shape[0] != rows.shape[0] or seed_idx.shape[0] != rows.shape[0]:
            raise ValueError("provenance/seed_index length must equal row count")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "provenance", prov)
        object.__setattr__(self, "seed_index", seed_idx)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def features(self) -> np.ndarray:
        return self.rows[:, :-1]

    @property
    def targets(self) -> np.ndarray:
        return self.rows[:, -1]


def default_per_seed(n_rare: int, n_normal: int) -> int:
    """Smallest N with n_rare + N*n_rare >= n_normal, clamped to [1, 10]."""
    if n_rare <= 0:
        return 1
    need = math.ceil(max(n_normal - n_rare, 0) / n_rare)
    return int(min(max(need, 1), MAX_AUTO_PER_SEED))


def knn_rare(rare: Dataset, seed_index: int, k: int):
    """k nearest rare rows to the seed (feature-space Euclidean).

    The seed itself is excluded; ties break toward the lower row index and
    distances come back sorted ascending.
    """
    n = rare.n_rows
    if k > n - 1:
        raise NotEnoughNeighbours(
            f"k={k} neighbours requested but only {n - 1} other rows exist"
        )
    diffs = rare.features - rare.features[seed_index]
    dists = np.sqrt(np.sum(diffs * diffs, axis=1))
    dists[seed_index] = np.inf
    order = np.argsort(dists, kind="stable")[:k]
    return order.astype(np.int64), dists[order]


def seed_distance_threshold(rare: Dataset, seed_index: int) -> float:
    """d_star: half the median distance from the seed to every other rare row."""
    diffs = rare.features - rare.features[seed_index]
    dists = np.sqrt(np.sum(diffs * diffs, axis=1))
    others = np.delete(dists, seed_index)
    return 0.5 * float(np.median(others))


def synthesize_from_seed(
    rare: Dataset, seed_index: int, params: SmognParams, rng: RngStream
) -> SyntheticPool:
    """Generate params.per_seed joint rows from one rare seed."""
    if params.per_seed is None:
        raise ValueError("per_seed must be resolved before per-seed synthesis")
    per_seed = params.per_seed
    nbr_idx, nbr_dist = knn_rare(rare, seed_index, params.k)
    d_star = seed_distance_threshold(rare, seed_index)

    gen = rng.generator()
    p = rare.n_features
    seed_feat = rare.features[seed_index]
    seed_y = rare.target[seed_index]

    rows = np.empty((per_seed, p + 1), dtype=np.float64)
    prov = np.empty(per_seed, dtype=object)
    log_nbr = np.empty(per_seed, dtype=np.int64)
    log_dist = np.empty(per_seed, dtype=np.float64)
    log_u = np.full(per_seed, np.nan)
    log_sigma = np.full(per_seed, np.nan)

    for i in range(per_seed):
        pick = int(gen.integers(0, params.k))
        j = int(nbr_idx[pick])
        d_ij = float(nbr_dist[pick])
        log_nbr[i] = j
        log_dist[i] = d_ij
        if d_ij < d_star:
            u = float(gen.uniform(0.0, 1.0))
            rows[i, :p] = seed_feat + u * (rare.features[j] - seed_feat)
            rows[i, p] = seed_y + u * (rare.target[j] - seed_y)
            prov[i] = INTERPOLATED
            log_u[i] = u
        else:
            sigma = min(params.jitter_cap, d_star)
            rows[i, :p] = seed_feat + gen.normal(0.0, 1.0, size=p) * sigma
            rows[i, p] = seed_y + gen.normal(0.0, 1.0) * sigma
            prov[i] = JITTERED
            log_sigma[i] = sigma

    draws = DrawLog(
        neighbor_index=log_nbr,
        neighbor_distance=log_dist,
        d_star=np.full(per_seed, d_star),
        interp_u=log_u,
        sigma=log_sigma,
    )
    return SyntheticPool(
        rows=rows,
        provenance=prov,
        seed_index=np.full(per_seed, seed_index, dtype=np.int64),
        draws=draws,
    )


def oversample(
    train: Dataset, fn: RelevanceFn, params: SmognParams, rng: RngStream
) -> SyntheticPool:
    """Initial synthetic pool: per_seed rows from every rare seed, in order.

    train and fn must be in consistent units (the pipeline passes scaled
    data with a relevance curve fitted on the scaled target). Per-seed
    streams are derived from the row index so seeds could run in parallel
    without changing the output.
    """
    rare, normal = partition_rare(train, fn, params.t_r)
    if rare.n_rows < 2:
        raise RareSetTooSmall(
            "only one rare row; neighbour-based synthesis needs at least two"
        )
    if params.per_seed is None:
        n_normal = 0 if normal is None else normal.n_rows
        per_seed = default_per_seed(rare.n_rows, n_normal)
        params = SmognParams(
            k=params.k, per_seed=per_seed, t_r=params.t_r, jitter_cap=params.jitter_cap
        )
    k = min(params.k, rare.n_rows - 1)
    if k != params.k:
        params = SmognParams(
            k=k, per_seed=params.per_seed, t_r=params.t_r, jitter_cap=params.jitter_cap
        )

    parts = [
        synthesize_from_seed(rare, i, params, rng.derive(i))
        for i in range(rare.n_rows)
    ]
    return concat_pools(parts)


def concat_pools(parts: list[SyntheticPool]) -> SyntheticPool:
    if not parts:
        raise EmptyRareSet("no synthetic rows were produced")
    draws = None
    if all(p.draws is not None for p in parts):
        draws = DrawLog(
            neighbor_index=np.concatenate([p.draws.neighbor_index for p in parts]),
            neighbor_distance=np.concatenate([p.draws.neighbor_distance for p in parts]),
            d_star=np.concatenate([p.draws.d_star for p in parts]),
            interp_u=np.concatenate([p.draws.interp_u for p in parts]),
            sigma=np.concatenate([p.draws.sigma for p in parts]),
        )
    return SyntheticPool(
        rows=np.concatenate([p.rows for p in parts], axis=0),
        provenance=np.concatenate([p.provenance for p in parts]),
        seed_index=np.concatenate([p.seed_index for p in parts]),
        draws=draws,
    )
