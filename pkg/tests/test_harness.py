import numpy as np
import pytest

from tailgen.data import Dataset, RngStream
from tailgen.errors import KTooLarge
from tailgen.gan import GanConfig
from tailgen.harness import (
    ExperimentConfig,
    compare_modes,
    knn_fit_predict,
    run_benchmark,
    run_split,
    wilcoxon_exact_p,
    wilcoxon_normal_p,
    wilcoxon_signed_rank,
)
from tailgen.relevance import fit_relevance, partition_rare
from tailgen.smogn import SmognParams, default_per_seed


def tail_dataset(n=160, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, 3))
    y = 1.5 * x[:, 0] + np.exp(1.1 * x[:, 1]) + gen.normal(0, 0.2, size=n)
    return Dataset(x, y)


def fast_config(**kw):
    defaults = dict(
        n_splits=4,
        smogn_params=SmognParams(per_seed=2),
        gan_config=GanConfig(iterations=5, critic_steps_per_gen=1, batch_size=16),
        master_seed=7,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestKnn:
    def test_exact_query_hits_own_target(self):
        gen = np.random.default_rng(1)
        train = Dataset(gen.normal(size=(20, 3)), gen.normal(size=20))
        preds = knn_fit_predict(train, train.features[[4]], 1)
        assert preds[0] == train.target[4]

    def test_equidistant_neighbours_average(self):
        train = Dataset(np.array([[-1.0], [1.0]]), np.array([0.0, 10.0]))
        preds = knn_fit_predict(train, np.array([[0.0]]), 2)
        assert preds[0] == 5.0

    def test_matches_brute_force_oracle(self):
        gen = np.random.default_rng(2)
        train = Dataset(gen.normal(size=(40, 4)), gen.normal(size=40))
        queries = gen.normal(size=(15, 4))
        k = 5
        preds = knn_fit_predict(train, queries, k)
        for i, q in enumerate(queries):
            dists = np.linalg.norm(train.features - q, axis=1)
            expected = train.target[np.argsort(dists, kind="stable")[:k]].mean()
            assert preds[i] == pytest.approx(expected, abs=1e-12)

    def test_k_too_large(self):
        train = Dataset(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(KTooLarge):
            knn_fit_predict(train, np.zeros((1, 1)), 4)


class TestWilcoxon:
    def test_hand_case(self):
        assert wilcoxon_signed_rank([1.0, 2.0, 3.0]) == pytest.approx(2.0 / 8.0)

    def test_all_zero_diffs(self):
        assert wilcoxon_signed_rank(np.zeros(10)) == 1.0

    def test_zeros_dropped(self):
        assert wilcoxon_signed_rank([0.0, 1.0, 2.0, 3.0, 0.0]) == pytest.approx(0.25)

    def test_permutation_invariance(self):
        gen = np.random.default_rng(3)
        diffs = gen.normal(size=9)
        p = wilcoxon_signed_rank(diffs)
        for _ in range(5):
            assert wilcoxon_signed_rank(gen.permutation(diffs)) == pytest.approx(p)

    def test_negation_antisymmetry(self):
        gen = np.random.default_rng(4)
        diffs = gen.normal(size=11)
        assert wilcoxon_signed_rank(-diffs) == pytest.approx(
            wilcoxon_signed_rank(diffs)
        )

    def test_exact_and_normal_agree_for_n10(self):
        gen = np.random.default_rng(5)
        for _ in range(100):
            diffs = gen.normal(size=10)
            exact = wilcoxon_exact_p(diffs)
            approx = wilcoxon_normal_p(diffs)
            assert abs(exact - approx) < 0.05

    def test_auto_switches_to_normal_for_large_n(self):
        gen = np.random.default_rng(6)
        diffs = gen.normal(size=25)
        assert wilcoxon_signed_rank(diffs) == pytest.approx(wilcoxon_normal_p(diffs))


class TestRunSplit:
    def test_baseline_pool_size(self):
        data = tail_dataset()
        res = run_split(fast_config(mode="baseline"), data, 0)
        assert res.train_pool_size == round(data.n_rows * 0.8)
        assert not res.degraded_to_baseline

    def test_smogn_pool_accounting(self):
        data = tail_dataset()
        cfg = fast_config(mode="smogn")
        res = run_split(cfg, data, 1)
        # recompute the expected rare count on the same split
        split_rng = RngStream(cfg.master_seed).derive(1000, 1)
        from tailgen.data import apply_scaler, fit_scaler, train_test_split

        train_set, _ = train_test_split(data, 0.2, split_rng)
        scaled = apply_scaler(train_set, fit_scaler(train_set))
        fn = fit_relevance(scaled.target)
        rare, _ = partition_rare(scaled, fn, cfg.t_r)
        assert res.train_pool_size == train_set.n_rows + 2 * rare.n_rows

    def test_smogan_pool_accounting(self):
        data = tail_dataset()
        cfg = fast_config(mode="smogan")
        res_gan = run_split(cfg, data, 1)
        res_smogn = run_split(fast_config(mode="smogn"), data, 1)
        assert res_gan.train_pool_size == res_smogn.train_pool_size

    def test_bitwise_deterministic(self):
        data = tail_dataset()
        cfg = fast_config(mode="smogan")
        assert run_split(cfg, data, 2) == run_split(cfg, data, 2)

    def test_degrades_to_baseline_when_nothing_rare(self):
        # whiskers clip to the extremes, so phi tops out at 0.9 < t_r
        gen = np.random.default_rng(7)
        data = Dataset(gen.normal(size=(100, 2)), np.arange(100, dtype=float))
        cfg = fast_config(mode="smogn", t_r=0.95)
        res = run_split(cfg, data, 0)
        base = run_split(fast_config(mode="baseline", t_r=0.95), data, 0)
        assert res.degraded_to_baseline
        assert res.rmse == base.rmse and res.sera == base.sera


class TestBenchmark:
    def test_self_comparison_is_all_ties(self):
        data = tail_dataset()
        res = run_split(fast_config(mode="baseline"), data, 0)
        results = [res, run_split(fast_config(mode="baseline"), data, 1)]
        comp = compare_modes(results, results)
        for mc in comp.metrics.values():
            assert mc.wins_a == 0 and mc.wins_b == 0
            assert mc.ties == len(results)
            assert mc.p_value == 1.0
            assert not mc.significant

    def test_wins_partition_split_count(self):
        data = tail_dataset()
        cfg = fast_config(n_splits=6)
        report = run_benchmark(cfg, ["baseline", "smogn"], data)
        for comp in report.comparisons:
            for mc in comp.metrics.values():
                assert mc.wins_a + mc.wins_b + mc.ties == 6

    def test_modes_share_split_sequences(self):
        data = tail_dataset()
        cfg = fast_config()
        report = run_benchmark(cfg, ["baseline", "smogn"], data)
        # both modes saw the same split indices in the same order
        assert [r.split_index for r in report.results["baseline"]] == [
            r.split_index for r in report.results["smogn"]
        ]

    def test_threaded_run_matches_serial(self):
        data = tail_dataset()
        cfg = fast_config(n_splits=4)
        serial = run_benchmark(cfg, ["baseline", "smogn"], data, threads=1)
        threaded = run_benchmark(cfg, ["baseline", "smogn"], data, threads=3)
        assert serial.results == threaded.results

    def test_needs_two_modes(self):
        data = tail_dataset()
        with pytest.raises(ValueError):
            run_benchmark(fast_config(), ["baseline"], data)

    def test_unknown_mode_rejected(self):
        data = tail_dataset()
        with pytest.raises(ValueError):
            run_benchmark(fast_config(), ["baseline", "nope"], data)


class TestDefaults:
    def test_balance_heuristic(self):
        assert default_per_seed(10, 100) == 9
        assert default_per_seed(3, 1000) == 10
        assert default_per_seed(80, 20) == 1
