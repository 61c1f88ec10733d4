"""Evaluation metrics and distribution diagnostics.

The error metrics weight squared errors by target relevance (rare values
matter more); the diagnostics compare a synthetic pool against the real
rows it is meant to imitate via correlation structure, univariate moments
and principal-component projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import BadComponentCount, LengthMismatch, TooFewRows
from .relevance import RelevanceFn, phi
from .smogn import SyntheticPool


@dataclass(frozen=True)
class UtilityParams:
    """Rare-region threshold and the error magnitude where utility bottoms out."""

    t_r: float = 0.8
    tolerance_tau: float = 1.0

    def __post_init__(self):
        if self.tolerance_tau <= 0:
            raise ValueError(f"tolerance_tau must be > 0, got {self.tolerance_tau}")


@dataclass(frozen=True)
class PhiMetrics:
    precision: float
    recall: float
    f1: float
    empty_precision_region: bool = False
    empty_recall_region: bool = False


def default_tau(train_targets) -> float:
    """Quarter of the training target range; floor keeps it positive."""
    y = np.asarray(train_targets, dtype=np.float64)
    return max(float(y.max() - y.min()) / 4.0, 1e-12)


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 1:
        raise LengthMismatch(f"vectors must match, got {y.shape} and {yhat.shape}")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def sera_from_phi(phi_values, sq_errors) -> float:
    """Integral over t in [0,1] of the squared error restricted to phi >= t.

    The integrand is a step function dropping points as t passes their
    relevance, so the integral is an exact finite sum over the distinct
    relevance levels.
    """
    pv = np.asarray(phi_values, dtype=np.float64)
    se = np.asarray(sq_errors, dtype=np.float64)
    if pv.shape != se.shape:
        raise LengthMismatch("phi values and squared errors must align")
    order = np.argsort(pv)
    pv_sorted = pv[order]
    se_sorted = se[order]
    # suffix[i] = sum of squared errors with phi >= pv_sorted[i]
    suffix = np.cumsum(se_sorted[::-1])[::-1]
    levels, first_idx = np.unique(pv_sorted, return_index=True)
    total = 0.0
    prev = 0.0
    for lvl, idx in zip(levels, first_idx):
        total += (lvl - prev) * suffix[idx]
        prev = lvl
    return float(total)


def sera(y, yhat, fn: RelevanceFn) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 1:
        raise LengthMismatch(f"vectors must match, got {y.shape} and {yhat.shape}")
    return sera_from_phi(phi(fn, y), (y - yhat) ** 2)


def utility(yhat: float, y: float, fn: RelevanceFn, params: UtilityParams) -> float:
    """Bounded reward in [-1, 1] for a single prediction.

    Accuracy earns phi(y) scaled by how small the error is; misses pay a
    cost scaled by the relevance of whichever side (truth or prediction)
    is rarer, so confident wrong predictions into the rare region hurt.
    """
    gamma = min(1.0, abs(yhat - y) / params.tolerance_tau)
    p_true = phi(fn, y)
    p_pred = phi(fn, yhat)
    return float(p_true * (1.0 - gamma) - max(p_true, p_pred) * gamma)


def precision_recall_f1(
    y, yhat, fn: RelevanceFn, params: UtilityParams
) -> PhiMetrics:
    """Relevance-weighted precision/recall/F1 over the rare region."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise LengthMismatch(f"vectors must match, got {y.shape} and {yhat.shape}")
    p_true = phi(fn, y)
    p_pred = phi(fn, yhat)
    gamma = np.minimum(1.0, np.abs(yhat - y) / params.tolerance_tau)
    u = p_true * (1.0 - gamma) - np.maximum(p_true, p_pred) * gamma

    pred_rare = p_pred > params.t_r
    true_rare = p_true > params.t_r

    empty_prec = not np.any(pred_rare)
    empty_rec = not np.any(true_rare)
    prec = 0.0 if empty_prec else float(
        np.sum(1.0 + u[pred_rare]) / np.sum(1.0 + p_pred[pred_rare])
    )
    rec = 0.0 if empty_rec else float(
        np.sum(1.0 + u[true_rare]) / np.sum(1.0 + p_true[true_rare])
    )
    f1 = 0.0 if prec + rec == 0.0 else 2.0 * prec * rec / (prec + rec)
    return PhiMetrics(prec, rec, f1, empty_prec, empty_rec)


def correlation_matrix(rows: np.ndarray) -> np.ndarray:
    """Pearson correlations with unit diagonal; constant columns pair to 0."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] < 3:
        raise TooFewRows("correlation needs at least 3 rows")
    centered = rows - rows.mean(axis=0)
    std = rows.std(axis=0)
    ok = std > 0.0
    safe = np.where(ok, std, 1.0)
    normalized = centered / safe
    corr = normalized.T @ normalized / rows.shape[0]
    corr[~ok, :] = 0.0
    corr[:, ~ok] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_gap(real: Dataset, pool: SyntheticPool) -> float:
    """Frobenius norm of the difference between joint correlation matrices."""
    real_rows = real.joint()
    if real_rows.shape[1] != pool.rows.shape[1]:
        raise LengthMismatch("real data and pool must share the joint dimension")
    c_real = correlation_matrix(real_rows)
    c_pool = correlation_matrix(pool.rows)
    return float(np.linalg.norm(c_real - c_pool, "fro"))


def correlation_frobenius_gap(
    real: Dataset, pool_a: SyntheticPool, pool_b: SyntheticPool
) -> tuple[float, float]:
    return correlation_gap(real, pool_a), correlation_gap(real, pool_b)


def _column_moments(rows: np.ndarray) -> np.ndarray:
    """Stacked (4, cols): mean, sample std, skewness, excess kurtosis."""
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    centered = rows - mean
    m2 = np.mean(centered**2, axis=0)
    m3 = np.mean(centered**3, axis=0)
    m4 = np.mean(centered**4, axis=0)
    std = np.sqrt(m2 * n / (n - 1))
    safe_m2 = np.where(m2 > 0.0, m2, 1.0)
    skew = np.where(m2 > 0.0, m3 / safe_m2**1.5, 0.0)
    kurt = np.where(m2 > 0.0, m4 / safe_m2**2 - 3.0, 0.0)
    return np.vstack([mean, std, skew, kurt])


def moment_gaps(real: Dataset, pool: SyntheticPool) -> tuple[float, float, float, float]:
    """Mean absolute per-column gap in mean/std/skewness/kurtosis."""
    real_rows = real.joint()
    if real_rows.shape[0] < 4 or pool.rows.shape[0] < 4:
        raise TooFewRows("moment gaps need at least 4 rows on each side")
    if real_rows.shape[1] != pool.rows.shape[1]:
        raise LengthMismatch("real data and pool must share the joint dimension")
    gaps = np.abs(_column_moments(real_rows) - _column_moments(pool.rows)).mean(axis=1)
    return tuple(float(g) for g in gaps)  # type: ignore[return-value]


def _jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps rotations over all off-diagonal pairs until the off-diagonal
    Frobenius mass falls below tol relative to the matrix norm.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a, "fro"), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a**2) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) + 100.0 * abs(apq) == abs(diff):
                    t = apq / diff  # angle below fp resolution
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    return np.diag(a).copy(), v


def pca_project(data: np.ndarray, n_components: int):
    """Top principal-component projections plus explained-variance ratios.

    Components are eigenvectors of the column covariance, eigenvalues
    sorted descending; each component's largest-magnitude loading is made
    positive so signs are reproducible.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise TooFewRows("PCA needs at least 2 rows")
    max_k = min(data.shape[0] - 1, data.shape[1])
    if not 1 <= n_components <= max_k:
        raise BadComponentCount(
            f"n_components must be in [1, {max_k}], got {n_components}"
        )
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (data.shape[0] - 1)
    eigvals, eigvecs = _jacobi_eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        lead = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[lead, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = eigvals.sum()
    ratios = eigvals[:n_components] / total if total > 0 else np.zeros(n_components)
    components = eigvecs[:, :n_components]
    return centered @ components, ratios, components


@dataclass(frozen=True)
class DiagnosticReport:
    """How closely one synthetic pool tracks the real joint distribution."""

    frobenius_real_vs_pool: float
    mean_gap: float
    std_gap: float
    skewness_gap: float
    kurtosis_gap: float
    pca_components: np.ndarray
    explained_variance_ratios: np.ndarray

    def to_dict(self) -> dict:
        return {
            "frobenius_real_vs_pool": self.frobenius_real_vs_pool,
            "moment_gaps": {
                "mean": self.mean_gap,
                "std": self.std_gap,
                "skewness": self.skewness_gap,
                "kurtosis": self.kurtosis_gap,
            },
            "pca_components": self.pca_components.tolist(),
            "explained_variance_ratios": self.explained_variance_ratios.tolist(),
        }


def diagnose_pool(
    real: Dataset, pool: SyntheticPool, n_components: int | None = None
) -> DiagnosticReport:
    """Full diagnostic bundle for one pool against the real rows."""
    real_rows = real.joint()
    if n_components is None:
        n_components = min(real_rows.shape[0] - 1, real_rows.shape[1], 5)
    _, ratios, components = pca_project(real_rows, n_components)
    gaps = moment_gaps(real, pool)
    return DiagnosticReport(
        frobenius_real_vs_pool=correlation_gap(real, pool),
        mean_gap=gaps[0],
        std_gap=gaps[1],
        skewness_gap=gaps[2],
        kurtosis_gap=gaps[3],
        pca_components=components,
        explained_variance_ratios=ratios,
    )
