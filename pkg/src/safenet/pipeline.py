"""Tabular data preparation: ingest, clean, balance, split, standardize.

The pipeline works on survey-style records: a fixed number of Likert items
(1-5, possibly missing), an accident count, and a company id. Records are
cleaned into dense datasets, class-balanced with SMOTE, and split into a
fixed test set plus a training pool.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import derive_rng

DEFAULT_FEATURE_DIM = 42
TEST_FRACTION = 0.4
TEST_CAP = 200


class SchemaError(ValueError):
    """Input table header does not match the expected column layout."""


class ParseError(ValueError):
    """A cell could not be parsed; message names row and column."""


class DataError(ValueError):
    """Data violates an operation precondition."""


@dataclass
class RawRecord:
    """One survey row before cleaning. Missing answers are None."""

    features: list  # length d, float or None
    accident_count: int
    company_id: int

    def missing_count(self) -> int:
        return sum(1 for v in self.features if v is None)


@dataclass
class Dataset:
    """Dense feature matrix with binary labels and per-row company ids."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in {0, 1}
    company_ids: np.ndarray  # (n,) int64

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.company_ids = np.asarray(self.company_ids, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise DataError("dataset needs a non-empty 2-d feature matrix")
        n = len(self.features)
        if self.labels.shape != (n,) or self.company_ids.shape != (n,):
            raise DataError("labels/company_ids length must match feature rows")
        if not np.isfinite(self.features).all():
            raise DataError("dataset contains non-finite feature values")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.company_ids[idx])


def concat_datasets(datasets: list[Dataset]) -> Dataset:
    if not datasets:
        raise DataError("cannot concatenate zero datasets")
    dims = {d.feature_dim for d in datasets}
    if len(dims) != 1:
        raise DataError(f"feature dimension mismatch across datasets: {sorted(dims)}")
    return Dataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        np.concatenate([d.company_ids for d in datasets]),
    )


@dataclass
class StandardizationStats:
    """Per-feature mean and standard deviation fitted on training data."""

    mu: np.ndarray
    sigma: np.ndarray

    def apply(self, data: Dataset) -> Dataset:
        return Dataset(
            (data.features - self.mu) / self.sigma, data.labels, data.company_ids
        )


@dataclass
class CompanySplit:
    train_pool: Dataset
    test_set: Dataset


# ---------------------------------------------------------------------------
# CSV ingestion and serialization
# ---------------------------------------------------------------------------


def _feature_columns(d: int) -> list[str]:
    return [f"q{j}" for j in range(1, d + 1)]


def load_records(path, feature_dim: int = DEFAULT_FEATURE_DIM) -> list[RawRecord]:
    """Read raw records from a comma-separated table.

    Expected header: q1..q<d>, accidents, company. An empty cell is a
    missing answer; any other non-numeric cell is a parse error.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    expected = _feature_columns(feature_dim) + ["accidents", "company"]
    if header != expected:
        raise SchemaError(
            f"{path}: header mismatch, expected {len(expected)} columns "
            f"q1..q{feature_dim},accidents,company but got {header[:feature_dim + 2]}"
        )

    records = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise ParseError(f"{path}: row {i} has {len(row)} cells, expected {len(expected)}")
        feats = []
        for j, cell in enumerate(row[:feature_dim]):
            cell = cell.strip()
            if cell == "":
                feats.append(None)
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {i} column {header[j]}: not a number: {cell!r}")
            if not 1.0 <= value <= 5.0:
                raise ParseError(f"{path}: row {i} column {header[j]}: value {value} outside [1, 5]")
            feats.append(value)
        try:
            accidents = int(float(row[feature_dim]))
            company = int(float(row[feature_dim + 1]))
        except ValueError:
            raise ParseError(f"{path}: row {i}: non-numeric accidents/company cell")
        if accidents < 0:
            raise ParseError(f"{path}: row {i}: negative accident count")
        records.append(RawRecord(feats, accidents, company))
    return records


def write_records(records: list[RawRecord], path) -> None:
    """Write raw records in the same format load_records ingests."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = len(records[0].features)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_feature_columns(d) + ["accidents", "company"])
        for rec in records:
            cells = ["" if v is None else format(v, "g") for v in rec.features]
            writer.writerow(cells + [rec.accident_count, rec.company_id])


def write_dataset(data: Dataset, path) -> None:
    """Write a cleaned dataset: q1..qd, company, label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_feature_columns(data.feature_dim) + ["company", "label"])
        for x, c, y in zip(data.features, data.company_ids, data.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(c), int(y)])


def load_dataset(path) -> Dataset:
    """Read a dataset written by write_dataset."""
    path = Path(path)
    rows = list(csv.reader(path.read_text().splitlines()))
    header = rows[0]
    if len(header) < 3 or header[-2:] != ["company", "label"]:
        raise SchemaError(f"{path}: expected trailing company,label columns")
    d = len(header) - 2
    feats = np.array([[float(c) for c in row[:d]] for row in rows[1:]])
    company = np.array([int(row[d]) for row in rows[1:]])
    labels = np.array([int(row[d + 1]) for row in rows[1:]])
    return Dataset(feats, labels, company)


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------


def clean(records: list[RawRecord], missing_threshold: float = 0.10) -> Dataset:
    """Drop records with too many missing answers, impute the rest.

    A record survives when (missing / d) <= missing_threshold. Missing
    values in surviving records are replaced by the per-column median over
    the present values of surviving records. Labels: 1 when the record
    reports at least one accident.
    """
    if not records:
        raise DataError("no records to clean")
    d = len(records[0].features)
    if any(len(r.features) != d for r in records):
        raise DataError("records disagree on feature count")
    kept = [r for r in records if r.missing_count() / d <= missing_threshold]
    if not kept:
        raise DataError("all records dropped by the missing-value filter")

    matrix = np.full((len(kept), d), np.nan)
    for i, rec in enumerate(kept):
        for j, v in enumerate(rec.features):
            if v is not None:
                matrix[i, j] = v

    for j in range(d):
        col = matrix[:, j]
        present = col[~np.isnan(col)]
        if present.size == 0:
            raise DataError(f"column {j + 1} has no present values; median undefined")
        col[np.isnan(col)] = np.median(present)

    labels = np.array([1 if r.accident_count > 0 else 0 for r in kept])
    company = np.array([r.company_id for r in kept])
    return Dataset(matrix, labels, company)


# ---------------------------------------------------------------------------
# SMOTE balancing
# ---------------------------------------------------------------------------


def smote_balance(data: Dataset, k: int = 5, seed: int = 0) -> Dataset:
    """Oversample the minority class with interpolated synthetic rows.

    Each synthetic row is x_a + lam * (x_b - x_a) where x_a is a uniformly
    chosen minority row, x_b one of its k nearest minority neighbours
    (Euclidean), and lam uniform on [0, 1]. Output keeps every original row
    and has equal class counts: 2 x majority count rows total.
    """
    n0, n1 = data.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("SMOTE needs both classes present")
    if n0 == n1:
        return data

    minority = 1 if n1 < n0 else 0
    n_min, n_maj = min(n0, n1), max(n0, n1)
    if n_min < 2:
        raise DataError("minority class needs at least 2 members for SMOTE")

    min_idx = np.flatnonzero(data.labels == minority)
    x_min = data.features[min_idx]
    k_eff = min(k, n_min - 1)

    # squared pairwise distances among minority rows; self excluded via +inf
    sq = np.einsum("ij,ij->i", x_min, x_min)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x_min @ x_min.T), 0.0)
    np.fill_diagonal(dist2, np.inf)
    neighbours = np.argsort(dist2, axis=1, kind="stable")[:, :k_eff]

    rng = derive_rng(seed, "smote")
    n_new = n_maj - n_min
    a = rng.integers(0, n_min, size=n_new)
    b = neighbours[a, rng.integers(0, k_eff, size=n_new)]
    lam = rng.uniform(0.0, 1.0, size=n_new)
    synthetic = x_min[a] + lam[:, None] * (x_min[b] - x_min[a])

    features = np.concatenate([data.features, synthetic])
    labels = np.concatenate([data.labels, np.full(n_new, minority)])
    company = np.concatenate([data.company_ids, data.company_ids[min_idx[a]]])
    return Dataset(features, labels, company)


# ---------------------------------------------------------------------------
# Splitting and subsampling
# ---------------------------------------------------------------------------


def held_out_size(n: int, rounding: str = "nearest") -> int:
    """Size of the held-out test set: min(round(0.4 n), 200)."""
    raw = TEST_FRACTION * n
    if rounding == "nearest":
        size = int(np.floor(raw + 0.5))
    elif rounding == "floor":
        size = int(np.floor(raw))
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return min(size, TEST_CAP)


def split_company(data: Dataset, seed: int, rounding: str = "nearest") -> CompanySplit:
    """Uniform row-disjoint split into test set and training pool.

    The test set takes min(round(0.4 N), 200) rows and must contain both
    classes; the remainder is the training pool.
    """
    n = len(data)
    if n < 5:
        raise DataError("need at least 5 rows to split")
    n0, n1 = data.class_counts()
    size = held_out_size(n, rounding)
    if n0 == 0 or n1 == 0 or size < 2:
        raise DataError("dataset too small to represent both classes in the test set")

    rng = derive_rng(seed, "company-split")
    for _ in range(100):
        perm = rng.permutation(n)
        test_idx = perm[:size]
        test_labels = data.labels[test_idx]
        if test_labels.min() != test_labels.max():
            return CompanySplit(
                train_pool=data.subset(np.sort(perm[size:])),
                test_set=data.subset(np.sort(test_idx)),
            )
    raise DataError("could not draw a test set containing both classes")


def sample_training_subset(pool: Dataset, per_class_n: int, seed: int) -> Dataset:
    """Draw exactly per_class_n rows of each class, uniformly without replacement."""
    if per_class_n < 1:
        raise DataError("per_class_n must be at least 1")
    rng = derive_rng(seed, "subset")
    picks = []
    for label in (0, 1):
        idx = np.flatnonzero(pool.labels == label)
        if len(idx) < per_class_n:
            raise DataError(
                f"class {label} has {len(idx)} rows, cannot sample {per_class_n}"
            )
        picks.append(rng.choice(idx, size=per_class_n, replace=False))
    chosen = np.sort(np.concatenate(picks))
    return pool.subset(chosen)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

SIGMA_FLOOR = 1e-12


def fit_standardization(train: Dataset) -> StandardizationStats:
    if len(train) < 2:
        raise DataError("standardization needs at least 2 training rows")
    mu = train.features.mean(axis=0)
    sigma = train.features.std(axis=0)  # population std
    sigma = np.where(sigma < SIGMA_FLOOR, 1.0, sigma)
    return StandardizationStats(mu=mu, sigma=sigma)


def standardize(
    train: Dataset, others: list[Dataset] = ()
) -> tuple[list[Dataset], StandardizationStats]:
    """Fit mean/std on train only, transform train and all other datasets.

    Returns ([train_std, *others_std], stats). Columns with population std
    below 1e-12 pass through centred (sigma treated as 1).
    """
    stats = fit_standardization(train)
    return [stats.apply(train)] + [stats.apply(d) for d in others], stats
