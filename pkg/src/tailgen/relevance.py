"""Relevance scoring of target values and the rare/normal partition.

phi(y) maps targets to [0,1]: values inside the interquartile range score
near zero, values out past the whiskers approach one. Each tail gets a
sigmoid anchored so that phi = 0.5 at the quartile/whisker midpoint and
phi = 0.9 at the whisker itself; the two sides combine with max() so the
score never exceeds one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import DegenerateDistribution, EmptyRareSet, TooFewValues

_LN9 = float(np.log(9.0))
_COINCIDE_TOL = 1e-12


@dataclass(frozen=True)
class RelevanceFn:
    """Fitted max-of-two-sigmoids relevance curve.

    An inactive side contributes 0 everywhere (its whisker coincided with
    its quartile, i.e. there is no tail on that side).
    """

    lower_center: float
    lower_whisker: float
    lower_slope: float
    lower_active: bool
    upper_center: float
    upper_whisker: float
    upper_slope: float
    upper_active: bool

    def __call__(self, y):
        return phi(self, y)


def fit_relevance(targets) -> RelevanceFn:
    """Fit the two tail sigmoids from quartiles and 1.5*IQR whiskers.

    Quantiles use linear interpolation of order statistics (numpy default),
    so test anchors are exact. Whiskers are clipped to the observed range.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim != 1 or y.size < 4:
        raise TooFewValues(f"need at least 4 target values, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise TooFewValues("targets contain non-finite values")

    q1, q3 = np.quantile(y, [0.25, 0.75])
    iqr = q3 - q1
    y_min, y_max = float(y.min()), float(y.max())

    w_r = min(y_max, q3 + 1.5 * iqr)
    upper_active = (w_r - q3) > _COINCIDE_TOL
    if upper_active:
        c_r = 0.5 * (q3 + w_r)
        k_r = _LN9 / (w_r - c_r)
    else:
        c_r, k_r = float(q3), 0.0

    w_l = max(y_min, q1 - 1.5 * iqr)
    lower_active = (q1 - w_l) > _COINCIDE_TOL
    if lower_active:
        c_l = 0.5 * (q1 + w_l)
        k_l = _LN9 / (c_l - w_l)
    else:
        c_l, k_l = float(q1), 0.0

    if not upper_active and not lower_active:
        raise DegenerateDistribution(
            "target distribution has no tails (all values effectively equal)"
        )
    return RelevanceFn(
        lower_center=float(c_l),
        lower_whisker=float(w_l),
        lower_slope=float(k_l),
        lower_active=lower_active,
        upper_center=float(c_r),
        upper_whisker=float(w_r),
        upper_slope=float(k_r),
        upper_active=upper_active,
    )


def phi(fn: RelevanceFn, y):
    """Relevance of one value or a vector of values, always in [0,1]."""
    arr = np.asarray(y, dtype=np.float64)
    up = expit(fn.upper_slope * (arr - fn.upper_center)) if fn.upper_active else np.zeros_like(arr)
    lo = expit(fn.lower_slope * (fn.lower_center - arr)) if fn.lower_active else np.zeros_like(arr)
    out = np.maximum(up, lo)
    return float(out) if np.isscalar(y) or arr.ndim == 0 else out


def partition_rare(
    data: Dataset, fn: RelevanceFn, t_r: float
) -> tuple[Dataset, "Dataset | None"]:
    """Split rows into (rare, normal) by phi(y) >= t_r, preserving order.

    normal is None in the corner case where every row is rare.
    """
    scores = phi(fn, data.target)
    rare_mask = scores >= t_r
    if not np.any(rare_mask):
        raise EmptyRareSet(
            f"no row has relevance >= {t_r}; oversampling would be a no-op"
        )
    rare = data.take(np.flatnonzero(rare_mask))
    normal_idx = np.flatnonzero(~rare_mask)
    normal = data.take(normal_idx) if normal_idx.size else None
    return rare, normal
