"""Dataset ingestion, synthetic generators, standardization and folds."""

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn import datasets as sk_datasets
from sklearn.model_selection import StratifiedKFold

from .exceptions import DataError


@dataclass
class Dataset:
    """Feature matrix with dense integer labels and optional fold assignment.

    ``X`` is kept in original units; standardization is applied per training
    split via :func:`standardize`.
    """

    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    label_mapping: dict = field(default_factory=dict)
    folds: np.ndarray = None

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def n_classes(self):
        return int(self.y.max()) + 1


@dataclass
class Scaler:
    """Per-feature z-score transform fit on training rows only."""

    mean_: np.ndarray
    std_: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.std_

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=np.float64) * self.std_ + self.mean_


def load_csv(path, label_column):
    """Parse a numeric-feature CSV with a header row into a Dataset.

    Labels are mapped to dense 0..C-1 by sorted unique value; the mapping is
    recorded on the dataset. Parse failures name the offending row (1-based,
    header is row 1) and column.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{path}: duplicate header names {dupes}")
        if label_column not in header:
            raise DataError(f"{path}: missing label column {label_column!r}")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]

        rows = []
        labels = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    labels.append(cell.strip())
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell.strip()!r} at row "
                        f"{line_no}, column {header[i]!r}"
                    ) from None
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float64)
    uniques = sorted(set(labels), key=_label_sort_key)
    mapping = {v: i for i, v in enumerate(uniques)}
    y = np.asarray([mapping[v] for v in labels], dtype=np.int64)
    return Dataset(name=str(path), X=X, y=y, feature_names=feature_names,
                   label_mapping=mapping)


def _label_sort_key(value):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def make_moons(n=1024, noise_std=0.01, seed=0):
    """Two interleaving half circles with isotropic Gaussian noise."""
    if n < 2:
        raise DataError("make_moons requires n >= 2")
    X, y = sk_datasets.make_moons(n_samples=n, noise=noise_std, random_state=seed)
    return Dataset(name="moons", X=np.asarray(X, dtype=np.float64),
                   y=np.asarray(y, dtype=np.int64),
                   feature_names=["x0", "x1"],
                   label_mapping={"0": 0, "1": 1})


def make_blobs(n=1500, centers=3, cluster_std=1.0, seed=0):
    """Isotropic equal-variance Gaussian clusters with balanced class sizes."""
    if centers < 2:
        raise DataError("make_blobs requires centers >= 2")
    X, y = sk_datasets.make_blobs(
        n_samples=n, centers=centers, cluster_std=cluster_std, random_state=seed
    )
    return Dataset(name="blobs", X=np.asarray(X, dtype=np.float64),
                   y=np.asarray(y, dtype=np.int64),
                   feature_names=[f"x{i}" for i in range(X.shape[1])],
                   label_mapping={str(c): c for c in range(centers)})


def split_folds(dataset, k=5, seed=0):
    """Stratified-by-class partition into k folds; stored on the dataset."""
    if k < 2:
        raise DataError("split_folds requires k >= 2")
    if dataset.n_samples < k:
        raise DataError("fewer samples than folds")
    counts = np.bincount(dataset.y)
    too_small = np.nonzero((counts > 0) & (counts < k))[0]
    if too_small.size:
        raise DataError(
            f"classes {too_small.tolist()} have fewer than {k} members; "
            "cannot stratify"
        )
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    folds = np.empty(dataset.n_samples, dtype=np.int64)
    for fold_id, (_, test_idx) in enumerate(skf.split(dataset.X, dataset.y)):
        folds[test_idx] = fold_id
    dataset.folds = folds
    return folds


def standardize(dataset, train_mask):
    """Fit a z-score scaler on training rows, apply to all rows.

    Returns (X_standardized, scaler). Zero-variance training features are an
    error; statistics never depend on non-training rows.
    """
    train_mask = np.asarray(train_mask, dtype=bool)
    if train_mask.shape[0] != dataset.n_samples:
        raise DataError("train mask length does not match dataset")
    if not train_mask.any():
        raise DataError("training mask selects no rows")
    X_train = dataset.X[train_mask]
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    zero_var = np.nonzero(std == 0.0)[0]
    if zero_var.size:
        names = [dataset.feature_names[i] for i in zero_var]
        raise DataError(
            f"zero-variance training features {names}; drop or recode them"
        )
    scaler = Scaler(mean_=mean, std_=std)
    return scaler.transform(dataset.X), scaler
