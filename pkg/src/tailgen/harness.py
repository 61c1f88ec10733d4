"""Experiment runner: pipeline modes, repeated splits, paired comparisons.

Four augmentation modes share identical split sequences so per-split metric
differences are honest paired observations. A deliberately plain k-NN
regressor serves as the downstream model: deterministic, no tuning, and
sensitive to how well the augmented pool fills sparse target regions.
Mode winners are counted per metric and checked with a two-sided Wilcoxon
signed-rank test.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, RngStream, apply_scaler, fit_scaler, train_test_split
from .errors import EmptyRareSet, KTooLarge, RareSetTooSmall
from .gan import GanConfig, noise_pool, refine, train
from .metrics import UtilityParams, default_tau, precision_recall_f1, rmse, sera
from .relevance import fit_relevance, partition_rare
from .smogn import SmognParams, SyntheticPool, default_per_seed, oversample

MODES = ("baseline", "smogn", "gan_only", "smogan")

# direction of improvement, encoded once: True means lower is better
LOWER_IS_BETTER = {
    "rmse": True,
    "sera": True,
    "precision": False,
    "recall": False,
    "f1": False,
}
METRIC_NAMES = tuple(LOWER_IS_BETTER)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "smogan"
    n_splits: int = 25
    test_fraction: float = 0.2
    t_r: float = 0.8
    smogn_params: SmognParams = field(default_factory=SmognParams)
    gan_config: GanConfig = field(default_factory=GanConfig)
    knn_k: int = 5
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")


@dataclass(frozen=True)
class SplitResult:
    split_index: int
    mode: str
    rmse: float
    sera: float
    precision: float
    recall: float
    f1: float
    train_pool_size: int
    degraded_to_baseline: bool = False

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class MetricComparison:
    wins_a: int
    wins_b: int
    ties: int
    p_value: float
    significant: bool


@dataclass(frozen=True)
class ComparisonSummary:
    method_a: str
    method_b: str
    metrics: dict[str, MetricComparison]


def knn_fit_predict(train: Dataset, test_features: np.ndarray, k: int) -> np.ndarray:
    """Mean target of the k nearest training rows per query, ties by row index."""
    if not 1 <= k <= train.n_rows:
        raise KTooLarge(f"k={k} but training set has {train.n_rows} rows")
    queries = np.asarray(test_features, dtype=np.float64)
    x = train.features
    sq = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(x**2, axis=1)[None, :]
        - 2.0 * queries @ x.T
    )
    preds = np.empty(queries.shape[0])
    for i in range(queries.shape[0]):
        nearest = np.argsort(sq[i], kind="stable")[:k]
        preds[i] = train.target[nearest].mean()
    return preds


def _augmented_train(
    config: ExperimentConfig, train_set: Dataset, rng: RngStream
) -> tuple[Dataset, bool]:
    """Training set for the configured mode, plus a degraded-to-baseline flag."""
    if config.mode == "baseline":
        return train_set, False

    scaler = fit_scaler(train_set)
    scaled = apply_scaler(train_set, scaler)
    try:
        fn_scaled = fit_relevance(scaled.target)
        params = replace(config.smogn_params, t_r=config.t_r)
        if config.mode == "gan_only":
            rare, normal = partition_rare(scaled, fn_scaled, config.t_r)
            if rare.n_rows < 2:
                raise RareSetTooSmall("gan_only needs at least 2 rare rows")
            n_normal = 0 if normal is None else normal.n_rows
            per_seed = (
                params.per_seed
                if params.per_seed is not None
                else default_per_seed(rare.n_rows, n_normal)
            )
            seeds = noise_pool(
                per_seed * rare.n_rows, scaled.n_features + 1, rng.derive(11)
            )
            generator, _, _ = train(
                rare.joint(), seeds, config.gan_config, rng.derive(12)
            )
            pool = refine(generator, seeds)
        else:
            pool = oversample(scaled, fn_scaled, params, rng.derive(13))
            if config.mode == "smogan":
                rare, _ = partition_rare(scaled, fn_scaled, config.t_r)
                generator, _, _ = train(
                    rare.joint(), pool, config.gan_config, rng.derive(14)
                )
                pool = refine(generator, pool)
    except (EmptyRareSet, RareSetTooSmall):
        return train_set, True

    synthetic = Dataset.from_joint(
        scaler.inverse_joint(pool.rows), train_set.column_names
    )
    merged = Dataset(
        np.vstack([train_set.features, synthetic.features]),
        np.concatenate([train_set.target, synthetic.target]),
        train_set.column_names,
    )
    return merged, False


def run_split(config: ExperimentConfig, data: Dataset, split_index: int) -> SplitResult:
    """One train/evaluate round; a pure function of (config, data, split_index)."""
    split_rng = RngStream(config.master_seed).derive(1000, split_index)
    train_set, test_set = train_test_split(data, config.test_fraction, split_rng)

    mode_key = MODES.index(config.mode)
    work_rng = RngStream(config.master_seed).derive(2000, split_index, mode_key)
    augmented, degraded = _augmented_train(config, train_set, work_rng)

    scaler = fit_scaler(train_set)  # test scaling must not depend on synthetic rows
    scaled_train = apply_scaler(augmented, scaler)
    scaled_test = apply_scaler(test_set, scaler)
    preds = knn_fit_predict(
        Dataset(scaled_train.features, augmented.target, augmented.column_names),
        scaled_test.features,
        config.knn_k,
    )

    fn = fit_relevance(train_set.target)
    tau = default_tau(train_set.target)
    util = UtilityParams(t_r=config.t_r, tolerance_tau=tau)
    pr = precision_recall_f1(test_set.target, preds, fn, util)
    return SplitResult(
        split_index=split_index,
        mode=config.mode,
        rmse=rmse(test_set.target, preds),
        sera=sera(test_set.target, preds, fn),
        precision=pr.precision,
        recall=pr.recall,
        f1=pr.f1,
        train_pool_size=augmented.n_rows,
        degraded_to_baseline=degraded,
    )


def _rank_with_ties(values: np.ndarray) -> np.ndarray:
    """Mid-ranks (1-based) of the absolute differences."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wilcoxon_exact_p(diffs: np.ndarray) -> float:
    """Two-sided p via enumeration of all sign assignments (zeros already removed)."""
    mags = np.abs(diffs)
    ranks = _rank_with_ties(mags)
    signs = np.sign(diffs)
    w_plus = float(ranks[signs > 0].sum())
    total = float(ranks.sum())
    w_low = min(w_plus, total - w_plus)
    w_high = total - w_low

    n = len(diffs)
    count = 0
    for bits in range(1 << n):
        w = 0.0
        for i in range(n):
            if bits >> i & 1:
                w += ranks[i]
        if w <= w_low + 1e-9 or w >= w_high - 1e-9:
            count += 1
    return min(count / (1 << n), 1.0)


def wilcoxon_normal_p(diffs: np.ndarray) -> float:
    """Two-sided normal approximation with tie correction and continuity correction."""
    mags = np.abs(diffs)
    ranks = _rank_with_ties(mags)
    signs = np.sign(diffs)
    w_plus = float(ranks[signs > 0].sum())
    n = len(diffs)
    total = n * (n + 1) / 2.0
    w = min(w_plus, total - w_plus)
    mean = total / 2.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(mags, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    z = (w - mean + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    return min(p, 1.0)


def wilcoxon_signed_rank(diffs, method: str = "auto") -> float:
    """Two-sided signed-rank p-value; zeros dropped, all-zero input gives 1."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 1 or diffs.size < 1:
        raise ValueError("diffs must be a non-empty vector")
    nonzero = diffs[diffs != 0.0]
    if nonzero.size == 0:
        return 1.0
    if method == "exact" or (method == "auto" and nonzero.size <= 12):
        return wilcoxon_exact_p(nonzero)
    if method in ("normal", "auto"):
        return wilcoxon_normal_p(nonzero)
    raise ValueError(f"unknown method {method!r}")


def compare_modes(
    results_a: list[SplitResult],
    results_b: list[SplitResult],
    alpha: float = 0.05,
) -> ComparisonSummary:
    """Per-metric win counts and Wilcoxon p over paired split results."""
    if len(results_a) != len(results_b):
        raise ValueError("paired comparisons need equal split counts")
    metrics = {}
    for name in METRIC_NAMES:
        a = np.array([r.metric(name) for r in results_a])
        b = np.array([r.metric(name) for r in results_b])
        if LOWER_IS_BETTER[name]:
            wins_a = int(np.sum(a < b))
            wins_b = int(np.sum(b < a))
        else:
            wins_a = int(np.sum(a > b))
            wins_b = int(np.sum(b > a))
        ties = len(a) - wins_a - wins_b
        p = wilcoxon_signed_rank(a - b)
        metrics[name] = MetricComparison(
            wins_a=wins_a,
            wins_b=wins_b,
            ties=ties,
            p_value=p,
            significant=p < alpha,
        )
    return ComparisonSummary(
        method_a=results_a[0].mode if results_a else "",
        method_b=results_b[0].mode if results_b else "",
        metrics=metrics,
    )


@dataclass(frozen=True)
class BenchmarkReport:
    modes: tuple[str, ...]
    results: dict[str, list[SplitResult]]
    comparisons: list[ComparisonSummary]


def run_benchmark(
    base_config: ExperimentConfig,
    modes: list[str],
    data: Dataset,
    threads: int = 1,
) -> BenchmarkReport:
    """All requested modes on identical split sequences, plus pairwise tests."""
    if len(modes) < 2:
        raise ValueError("benchmark needs at least 2 modes")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")

    jobs = [
        (mode, split)
        for mode in modes
        for split in range(base_config.n_splits)
    ]

    def one(job):
        mode, split = job
        return run_split(replace(base_config, mode=mode), data, split)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(j) for j in jobs]

    results: dict[str, list[SplitResult]] = {m: [] for m in modes}
    for (mode, _), res in zip(jobs, outcomes):
        results[mode].append(res)

    comparisons = [
        compare_modes(results[a], results[b])
        for a, b in itertools.combinations(modes, 2)
    ]
    return BenchmarkReport(tuple(modes), results, comparisons)
