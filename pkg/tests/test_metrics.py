import numpy as np
import pytest

from tailgen.data import Dataset, RngStream
from tailgen.errors import BadComponentCount, LengthMismatch, TooFewRows
from tailgen.metrics import (
    UtilityParams,
    correlation_frobenius_gap,
    correlation_gap,
    correlation_matrix,
    diagnose_pool,
    moment_gaps,
    pca_project,
    precision_recall_f1,
    rmse,
    sera,
    sera_from_phi,
    utility,
)
from tailgen.relevance import fit_relevance, phi
from tailgen.smogn import SyntheticPool


def skewed_sample():
    gen = np.random.default_rng(0)
    return np.concatenate([gen.normal(0, 1, 300), gen.lognormal(1.0, 0.8, 60)])


def upper_sigmoid_inverse(fn, target_phi):
    """y with phi(y) = target_phi on the upper tail sigmoid."""
    return fn.upper_center - np.log(1.0 / target_phi - 1.0) / fn.upper_slope


def as_pool(rows):
    rows = np.asarray(rows, dtype=float)
    return SyntheticPool(
        rows=rows,
        provenance=np.array(["refined"] * len(rows), dtype=object),
        seed_index=np.zeros(len(rows), dtype=np.int64),
    )


class TestRmse:
    def test_perfect_prediction(self):
        y = np.array([1.0, 2.0, 3.0])
        assert rmse(y, y.copy()) == 0.0

    def test_hand_case(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))

    def test_homogeneity(self):
        gen = np.random.default_rng(1)
        y, yhat = gen.normal(size=20), gen.normal(size=20)
        for c in (-2.0, 0.5, 7.0):
            assert rmse(c * y, c * yhat) == pytest.approx(abs(c) * rmse(y, yhat))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            rmse([1.0], [1.0, 2.0])


class TestSera:
    def test_full_weight_reduces_to_sse(self):
        se = np.array([4.0, 1.0, 9.0])
        assert sera_from_phi(np.ones(3), se) == pytest.approx(se.sum(), abs=1e-12)

    def test_hand_case_step_integration(self):
        # SER_t is 5 on [0, 0.2], 1 on (0.2, 0.9], 0 after
        value = sera_from_phi([0.2, 0.9], [4.0, 1.0])
        assert value == pytest.approx(0.2 * 5 + 0.7 * 1, abs=1e-12)
        assert value == pytest.approx(0.2 * 4.0 + 0.9 * 1.0, abs=1e-12)

    def test_step_equals_closed_form(self):
        gen = np.random.default_rng(2)
        for _ in range(100):
            n = int(gen.integers(1, 60))
            pv = gen.uniform(0.0, 1.0, size=n)
            se = gen.uniform(0.0, 4.0, size=n)
            closed = float(np.sum(pv * se))  # independent closed-form oracle
            step = sera_from_phi(pv, se)
            assert abs(step - closed) <= 1e-12 * max(1.0, abs(closed))

    def test_matches_riemann_oracle(self):
        gen = np.random.default_rng(3)
        pv = gen.uniform(0.0, 1.0, size=40)
        se = gen.uniform(0.0, 4.0, size=40)
        grid = (np.arange(100_000) + 0.5) / 100_000
        riemann = float(((pv[None, :] >= grid[:, None]) @ se).sum()) / 100_000
        assert sera_from_phi(pv, se) == pytest.approx(riemann, rel=1e-4)

    def test_end_to_end_with_relevance_fn(self):
        y = skewed_sample()
        fn = fit_relevance(y)
        yhat = y + np.linspace(-1, 1, y.size)
        expected = float(np.sum(phi(fn, y) * (y - yhat) ** 2))
        assert sera(y, yhat, fn) == pytest.approx(expected, rel=1e-12)


class TestUtility:
    def setup_method(self):
        self.fn = fit_relevance(skewed_sample())

    def test_perfect_prediction_scores_phi(self):
        y = float(self.fn.upper_whisker)
        params = UtilityParams(t_r=0.8, tolerance_tau=1.0)
        assert utility(y, y, self.fn, params) == pytest.approx(phi(self.fn, y))

    def test_max_error_on_rare_pair_is_minus_one(self):
        y = 1e9  # phi == 1 far out in the tail
        yhat = 2e9
        params = UtilityParams(t_r=0.8, tolerance_tau=1.0)
        assert utility(yhat, y, self.fn, params) == pytest.approx(-1.0)

    def test_hand_balance_case(self):
        # phi(y) = 0.9 and phi(yhat) = 0.4 at half-tau error: reward and
        # cost cancel exactly
        y = float(self.fn.upper_whisker)
        yhat = upper_sigmoid_inverse(self.fn, 0.4)
        assert phi(self.fn, yhat) == pytest.approx(0.4, abs=1e-12)
        params = UtilityParams(t_r=0.8, tolerance_tau=2.0 * abs(yhat - y))
        assert utility(yhat, y, self.fn, params) == pytest.approx(0.0, abs=1e-12)

    def test_bounded(self):
        gen = np.random.default_rng(4)
        params = UtilityParams(t_r=0.8, tolerance_tau=0.7)
        for _ in range(300):
            y, yhat = gen.uniform(-20, 40, size=2)
            u = utility(yhat, y, self.fn, params)
            assert -1.0 <= u <= 1.0


class TestPrecisionRecallF1:
    def setup_method(self):
        self.y = skewed_sample()
        self.fn = fit_relevance(self.y)
        self.params = UtilityParams(t_r=0.8, tolerance_tau=1.0)

    def test_perfect_predictions(self):
        assert np.any(phi(self.fn, self.y) > 0.8)  # non-empty rare region
        res = precision_recall_f1(self.y, self.y.copy(), self.fn, self.params)
        assert res.precision == pytest.approx(1.0, abs=1e-12)
        assert res.recall == pytest.approx(1.0, abs=1e-12)
        assert res.f1 == pytest.approx(1.0, abs=1e-12)

    def test_empty_regions_flagged(self):
        y = np.array([0.0, 0.1, 0.2, 0.3])  # nothing rare under this fn
        yhat = y.copy()
        res = precision_recall_f1(y, yhat, self.fn, self.params)
        assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)
        assert res.empty_precision_region and res.empty_recall_region

    def test_four_point_hand_instance(self):
        fn, params = self.fn, self.params
        y = np.array(
            [
                upper_sigmoid_inverse(fn, 0.95),
                upper_sigmoid_inverse(fn, 0.85),
                upper_sigmoid_inverse(fn, 0.5),
                upper_sigmoid_inverse(fn, 0.3),
            ]
        )
        yhat = y + np.array([0.3, -2.0, 0.9, 0.1])
        res = precision_recall_f1(y, yhat, fn, params)

        # independent evaluation with explicit loops
        def u_of(yh, yt):
            gamma = min(1.0, abs(yh - yt) / params.tolerance_tau)
            return phi(fn, yt) * (1 - gamma) - max(phi(fn, yt), phi(fn, yh)) * gamma

        prec_num = prec_den = rec_num = rec_den = 0.0
        for yt, yh in zip(y, yhat):
            if phi(fn, yh) > params.t_r:
                prec_num += 1 + u_of(yh, yt)
                prec_den += 1 + phi(fn, yh)
            if phi(fn, yt) > params.t_r:
                rec_num += 1 + u_of(yh, yt)
                rec_den += 1 + phi(fn, yt)
        prec = prec_num / prec_den
        rec = rec_num / rec_den
        assert res.precision == pytest.approx(prec, abs=1e-12)
        assert res.recall == pytest.approx(rec, abs=1e-12)
        assert res.f1 == pytest.approx(2 * prec * rec / (prec + rec), abs=1e-12)

    def test_values_bounded_under_fuzz(self):
        gen = np.random.default_rng(5)
        for _ in range(500):
            n = int(gen.integers(1, 30))
            y = gen.uniform(-5, 30, size=n)
            yhat = y + gen.normal(0, gen.uniform(0.1, 10), size=n)
            res = precision_recall_f1(y, yhat, self.fn, self.params)
            for v in (res.precision, res.recall, res.f1):
                assert 0.0 <= v <= 1.0


class TestCorrelation:
    def real_dataset(self, n=60, seed=6):
        gen = np.random.default_rng(seed)
        x = gen.normal(size=(n, 3))
        y = x[:, 0] * 2.0 + gen.normal(0, 0.3, size=n)
        return Dataset(x, y)

    def test_identical_pool_zero_gap(self):
        ds = self.real_dataset()
        assert correlation_gap(ds, as_pool(ds.joint())) == pytest.approx(0.0, abs=1e-12)

    def test_perfectly_correlated_columns(self):
        gen = np.random.default_rng(7)
        col = gen.normal(size=50)
        rows = np.column_stack([col, 3.0 * col + 5.0])
        corr = correlation_matrix(rows)
        assert corr[0, 1] == pytest.approx(1.0)

    def test_symmetric_unit_diagonal(self):
        gen = np.random.default_rng(8)
        rows = gen.normal(size=(40, 5))
        rows[:, 2] = 7.0  # constant column pairs to zero
        corr = correlation_matrix(rows)
        assert np.allclose(corr, corr.T)
        assert np.allclose(np.diag(corr), 1.0)
        assert np.all(corr[2, [0, 1, 3, 4]] == 0.0)

    def test_gap_symmetric_in_matrix_arguments(self):
        ds = self.real_dataset()
        gen = np.random.default_rng(9)
        pool = as_pool(gen.normal(size=(50, 4)))
        a = correlation_matrix(ds.joint())
        b = correlation_matrix(pool.rows)
        assert np.linalg.norm(a - b, "fro") == pytest.approx(
            np.linalg.norm(b - a, "fro")
        )

    def test_pair_interface(self):
        ds = self.real_dataset()
        pool_same = as_pool(ds.joint())
        gen = np.random.default_rng(10)
        pool_other = as_pool(gen.normal(size=(50, 4)))
        gap_a, gap_b = correlation_frobenius_gap(ds, pool_same, pool_other)
        assert gap_a == pytest.approx(0.0, abs=1e-12)
        assert gap_b > gap_a


class TestMomentGaps:
    def test_identical_pool_all_zero(self):
        gen = np.random.default_rng(11)
        ds = Dataset(gen.normal(size=(30, 2)), gen.normal(size=30))
        gaps = moment_gaps(ds, as_pool(ds.joint()))
        assert gaps == pytest.approx((0.0, 0.0, 0.0, 0.0), abs=1e-12)

    def test_symmetric_sample_zero_skew(self):
        rows = np.array([[-1.0], [0.0], [1.0], [-2.0], [2.0]])
        ds = Dataset(rows, rows[:, 0])
        shifted = as_pool(np.column_stack([rows[:, 0], rows[:, 0]]) * -1.0)
        gaps = moment_gaps(ds, shifted)
        assert gaps[2] == pytest.approx(0.0, abs=1e-12)  # both skews are zero

    def test_too_few_rows(self):
        ds = Dataset(np.ones((3, 1)), np.arange(3, dtype=float))
        with pytest.raises(TooFewRows):
            moment_gaps(ds, as_pool(np.zeros((3, 2))))


class TestPca:
    def test_rank_one_line(self):
        gen = np.random.default_rng(12)
        t = gen.normal(size=150)
        pts = np.column_stack([t, 2.0 * t])
        _, ratios, comps = pca_project(pts, 2)
        assert ratios[0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(np.abs(comps[:, 0]), np.array([1.0, 2.0]) / np.sqrt(5))
        assert comps[np.argmax(np.abs(comps[:, 0])), 0] > 0  # sign convention

    def test_isotropic_ratios(self):
        gen = np.random.default_rng(13)
        pts = gen.normal(size=(10_000, 2))
        _, ratios, _ = pca_project(pts, 2)
        assert ratios[0] == pytest.approx(0.5, abs=0.05)
        assert ratios[1] == pytest.approx(0.5, abs=0.05)

    def test_full_rank_reconstruction_and_ratio_sum(self):
        gen = np.random.default_rng(14)
        pts = gen.normal(size=(40, 6)) @ gen.normal(size=(6, 6))
        proj, ratios, comps = pca_project(pts, 6)
        assert ratios.sum() == pytest.approx(1.0, abs=1e-9)
        centered = pts - pts.mean(axis=0)
        assert np.allclose(proj @ comps.T, centered, atol=1e-9)

    def test_matches_library_eigensolver(self):
        gen = np.random.default_rng(15)
        pts = gen.normal(size=(80, 5)) * np.array([3.0, 1.0, 0.5, 2.0, 0.1])
        _, ratios, comps = pca_project(pts, 5)
        cov = np.cov(pts, rowvar=False)
        ref_vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert np.allclose(ratios, ref_vals / ref_vals.sum(), atol=1e-10)
        _, ref_vecs = np.linalg.eigh(cov)
        ref_vecs = ref_vecs[:, ::-1]
        for j in range(5):
            # same subspace up to sign
            assert abs(float(comps[:, j] @ ref_vecs[:, j])) == pytest.approx(1.0)

    def test_bad_component_count(self):
        with pytest.raises(BadComponentCount):
            pca_project(np.zeros((5, 3)), 4)


class TestDiagnoseBundle:
    def test_report_fields(self):
        gen = np.random.default_rng(16)
        ds = Dataset(gen.normal(size=(50, 3)), gen.normal(size=50))
        report = diagnose_pool(ds, as_pool(ds.joint()), 3)
        assert report.frobenius_real_vs_pool == pytest.approx(0.0, abs=1e-12)
        assert report.mean_gap == pytest.approx(0.0, abs=1e-12)
        payload = report.to_dict()
        assert set(payload["moment_gaps"]) == {"mean", "std", "skewness", "kurtosis"}
        ratios = np.asarray(payload["explained_variance_ratios"])
        assert np.all(ratios >= 0) and ratios.sum() <= 1 + 1e-9
