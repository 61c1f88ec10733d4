"""Dataset container, CSV ingestion, z-score scaling and seeded splitting.

Everything downstream works on plain float64 numpy arrays. A Dataset is an
immutable (features, target) pair; the Scaler standardizes features AND
target jointly because the adversarial refinement stage consumes joint rows.
All randomness flows through RngStream values so every pipeline stage is a
pure function of (inputs, seed, stream_id).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyData,
    MissingColumn,
    ParseError,
    TooFewRows,
)

_STD_FLOOR = 1e-12

# splitmix64 constants, used to fold derivation keys into a stream id
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_MIX1 = 0xBF58476D1CE4E5B9
_SM64_MIX2 = 0x94D049BB133111EB
_U64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + _SM64_GAMMA) & _U64
    x = ((x ^ (x >> 30)) * _SM64_MIX1) & _U64
    x = ((x ^ (x >> 27)) * _SM64_MIX2) & _U64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Value identifying one reproducible random stream.

    Identical (seed, stream_id) pairs yield identical draw sequences;
    distinct stream_ids give statistically independent sequences. The value
    itself holds no generator state, so it can be shared freely across
    parallel workers.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def derive(self, *keys: int) -> "RngStream":
        """Deterministic child stream obtained by folding keys into the id."""
        sid = self.stream_id & _U64
        for k in keys:
            sid = _splitmix64(sid ^ _splitmix64(k & _U64))
        return RngStream(self.seed, sid)


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix plus continuous target.

    column_names has p+1 entries; the last one names the target.
    """

    features: np.ndarray
    target: np.ndarray
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise EmptyData("feature matrix must be n x p with n, p >= 1")
        if tgt.ndim != 1 or tgt.shape[0] != feats.shape[0]:
            raise DimensionMismatch(
                f"target length {tgt.shape[0]} != row count {feats.shape[0]}"
            )
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(tgt)):
            raise ParseError("dataset contains non-finite entries")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", tgt)
        names = list(self.column_names)
        if not names:
            names = [f"x{i}" for i in range(feats.shape[1])] + ["y"]
        if len(names) != feats.shape[1] + 1:
            raise DimensionMismatch(
                f"expected {feats.shape[1] + 1} column names, got {len(names)}"
            )
        object.__setattr__(self, "column_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def joint(self) -> np.ndarray:
        """Rows as (n, p+1) matrix with the target in the last column."""
        return np.hstack([self.features, self.target[:, None]])

    @classmethod
    def from_joint(cls, rows: np.ndarray, column_names: list[str]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.float64)
        return cls(rows[:, :-1], rows[:, -1], column_names)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.features[idx], self.target[idx], self.column_names)


@dataclass(frozen=True)
class Scaler:
    """Per-column z-score transform over the joint (features + target) block.

    Population standard deviation; columns with no spread keep std 1 so that
    column indices survive into the diagnostics.
    """

    mean: np.ndarray
    std: np.ndarray

    def transform_joint(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[1] != self.mean.shape[0]:
            raise DimensionMismatch(
                f"scaler has {self.mean.shape[0]} columns, data has {rows.shape[1]}"
            )
        return (rows - self.mean) / self.std

    def inverse_joint(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[1] != self.mean.shape[0]:
            raise DimensionMismatch(
                f"scaler has {self.mean.shape[0]} columns, data has {rows.shape[1]}"
            )
        return rows * self.std + self.mean


def fit_scaler(data: Dataset) -> Scaler:
    """Column means and population stds of the joint block, stds floored at 1."""
    joint = data.joint()
    mean = joint.mean(axis=0)
    std = joint.std(axis=0)  # population (ddof=0): this is a transform, not an estimator
    std = np.where(std < _STD_FLOOR, 1.0, std)
    return Scaler(mean=mean, std=std)


def apply_scaler(data: Dataset, scaler: Scaler) -> Dataset:
    return Dataset.from_joint(scaler.transform_joint(data.joint()), data.column_names)


def invert_scaler(data: Dataset, scaler: Scaler) -> Dataset:
    return Dataset.from_joint(scaler.inverse_joint(data.joint()), data.column_names)


def load_csv(path, target_column: str) -> Dataset:
    """Read an RFC-4180 style CSV with a header row into a Dataset.

    Every cell must parse as a finite number; missing values are a hard
    error. Row order is preserved.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise MissingColumn(
                f"{path}: target column {target_column!r} not in header {header}"
            )
        tcol = header.index(target_column)
        rows = []
        for rownum, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"{path}: row {rownum} has {len(record)} cells, expected {len(header)}"
                )
            vals = []
            for colnum, cell in enumerate(record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rownum}, column {header[colnum]!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(
                        f"{path}: row {rownum}, column {header[colnum]!r}: "
                        f"non-finite value {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyData(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=np.float64)
    feat_cols = [c for c in range(len(header)) if c != tcol]
    names = [header[c] for c in feat_cols] + [header[tcol]]
    return Dataset(matrix[:, feat_cols], matrix[:, tcol], names)


def save_csv(path, data: Dataset, extra_columns: dict | None = None) -> None:
    """Write a Dataset back to CSV, optionally appending extra columns."""
    extra = extra_columns or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.column_names + list(extra.keys()))
        for i in range(data.n_rows):
            row = [repr(float(v)) for v in data.features[i]]
            row.append(repr(float(data.target[i])))
            for col in extra.values():
                val = col[i]
                row.append(str(val) if not isinstance(val, float) else repr(val))
            writer.writerow(row)


def train_test_split(
    data: Dataset, test_fraction: float, rng: RngStream
) -> tuple[Dataset, Dataset]:
    """Disjoint random row partition; test size round(n*f) clamped to [1, n-1]."""
    n = data.n_rows
    if n < 5:
        raise TooFewRows(f"need at least 5 rows to split, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    perm = rng.generator().permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.take(train_idx), data.take(test_idx)
