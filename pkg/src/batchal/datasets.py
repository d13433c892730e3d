"""Dataset ingestion: delimited text, sparse index:value text, and a synthetic mixture.

All loaders produce the same Dataset shape: a dense float64 feature matrix,
dense integer labels re-indexed in first-appearance order, and a disjoint,
covering train/test split in which every class appears on the train side.
File loaders standardize features to zero mean and unit variance using
train-split statistics only; constant train columns are left at zero rather
than divided by a zero scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    label_values: tuple = ()
    provenance: dict = field(default_factory=dict)

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def input_dim(self):
        return self.features.shape[1]

    def validate(self):
        X = self.features
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("features must be a nonempty (n, d) matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite entries")
        if self.labels.shape != (X.shape[0],):
            raise ValueError("labels must parallel feature rows")
        n = X.shape[0]
        tr = np.asarray(self.train_idx)
        te = np.asarray(self.test_idx)
        merged = np.concatenate([tr, te])
        if np.intersect1d(tr, te).size:
            raise ValueError("train/test splits overlap")
        if np.unique(merged).size != n or merged.size != n:
            raise ValueError("train/test splits must cover every row exactly once")
        classes = np.unique(self.labels)
        if not np.array_equal(classes, np.arange(classes.size)):
            raise ValueError("labels must be dense 0..K-1")
        if not np.array_equal(np.unique(self.labels[tr]), classes):
            raise ValueError("every class must appear in the train split")
        return self


def _dense_labels(raw_labels):
    # Re-index labels densely in order of first appearance.
    seen = {}
    codes = np.empty(len(raw_labels), dtype=np.int64)
    for i, value in enumerate(raw_labels):
        if value not in seen:
            seen[value] = len(seen)
        codes[i] = seen[value]
    return codes, tuple(seen)


def _stratified_split(labels, test_fraction, rng):
    # Per class, a seeded shuffle sends floor(test_fraction * count) rows to
    # test; the remainder stays in train, so train keeps at least one row of
    # every class whenever test_fraction < 1.
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    train, test = [], []
    for cls in np.unique(labels):
        rows = np.nonzero(labels == cls)[0]
        rows = rows[rng.permutation(rows.size)]
        n_test = int(np.floor(test_fraction * rows.size))
        test.append(rows[:n_test])
        train.append(rows[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _standardize_train_stats(features, train_idx):
    mean = features[train_idx].mean(axis=0)
    std = features[train_idx].std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    return (features - mean) / scale


def _finish(name, features, raw_labels, test_fraction, split_seed, standardize, provenance):
    labels, label_values = _dense_labels(raw_labels)
    rng = np.random.default_rng(split_seed)
    train_idx, test_idx = _stratified_split(labels, test_fraction, rng)
    if standardize:
        features = _standardize_train_stats(features, train_idx)
    ds = Dataset(
        name=name,
        features=features,
        labels=labels,
        train_idx=train_idx,
        test_idx=test_idx,
        label_values=label_values,
        provenance=provenance,
    )
    return ds.validate()


def load_csv(path, label_column, has_header=True, test_fraction=0.25, split_seed=0, standardize=True, name=None):
    """Load a delimited text table with one labeled example per row.

    label_column names the label field (header name or 0-based position);
    every other column must parse as a finite float. Parse failures report
    the file, line and column.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: file is empty")
    header = None
    if has_header:
        header, rows = rows[0], rows[1:]
        if not rows:
            raise ValueError(f"{path}: no data rows after header")
    if isinstance(label_column, str):
        if header is None:
            raise ValueError(f"{path}: label column given by name but file has no header")
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r} in header")
        label_pos = header.index(label_column)
    else:
        label_pos = int(label_column)

    width = len(rows[0])
    if not 0 <= label_pos < width:
        raise ValueError(f"{path}: label column {label_pos} out of range for {width} columns")
    first_line = 2 if has_header else 1
    raw_labels = []
    features = np.empty((len(rows), width - 1))
    for r, row in enumerate(rows):
        line = first_line + r
        if len(row) != width:
            raise ValueError(f"{path}:{line}: expected {width} fields, found {len(row)}")
        raw_labels.append(row[label_pos])
        c_out = 0
        for c, cell in enumerate(row):
            if c == label_pos:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"{path}:{line}: column {c}: could not parse {cell!r} as a number") from None
            if not np.isfinite(value):
                raise ValueError(f"{path}:{line}: column {c}: non-finite feature value {cell!r}")
            features[r, c_out] = value
            c_out += 1
    return _finish(
        name or str(path),
        features,
        raw_labels,
        test_fraction,
        split_seed,
        standardize,
        {"format": "csv", "path": str(path), "label_column": label_column},
    )


def load_libsvm(path, num_features=None, test_fraction=0.25, split_seed=0, standardize=True, name=None):
    """Load sparse "label index:value" text with 1-based feature indices.

    Absent indices are zero. The feature count is num_features when given,
    otherwise the largest index seen. Duplicate indices within a line, bad
    numbers, and out-of-range indices are reported with their line number.
    """
    entries = []
    raw_labels = []
    max_idx = 0
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            raw_labels.append(tokens[0])
            seen = {}
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    value = float(val_s)
                except ValueError:
                    raise ValueError(f"{path}:{line_no}: malformed index:value token {tok!r}") from None
                if idx < 1:
                    raise ValueError(f"{path}:{line_no}: feature index {idx} must be >= 1")
                if num_features is not None and idx > num_features:
                    raise ValueError(f"{path}:{line_no}: feature index {idx} exceeds num_features={num_features}")
                if idx in seen:
                    raise ValueError(f"{path}:{line_no}: duplicate feature index {idx}")
                if not np.isfinite(value):
                    raise ValueError(f"{path}:{line_no}: non-finite feature value {val_s!r}")
                seen[idx] = value
                max_idx = max(max_idx, idx)
            entries.append(seen)
    if not entries:
        raise ValueError(f"{path}: file contains no examples")
    width = num_features if num_features is not None else max_idx
    if width < 1:
        raise ValueError(f"{path}: no feature indices present and num_features not given")
    features = np.zeros((len(entries), width))
    for r, mapping in enumerate(entries):
        for idx, value in mapping.items():
            features[r, idx - 1] = value
    return _finish(
        name or str(path),
        features,
        raw_labels,
        test_fraction,
        split_seed,
        standardize,
        {"format": "libsvm", "path": str(path), "num_features": width},
    )


def synth_gaussian_mixture(num_classes, input_dim, n, separation, seed, test_fraction=0.25, name=None):
    """Balanced mixture of spherical unit-covariance Gaussians.

    Class means sit at separation times independent random unit directions.
    Class sizes differ by at most one, row order is shuffled, and the split
    is stratified; features are left on their generated scale. separation=0
    collapses every class onto one cluster, so no classifier can beat chance.
    """
    if num_classes < 2 or input_dim < 1:
        raise ValueError("need num_classes >= 2 and input_dim >= 1")
    if n < num_classes:
        raise ValueError(f"need at least one example per class, got n={n} for {num_classes} classes")
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((num_classes, input_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation * dirs

    counts = np.full(num_classes, n // num_classes)
    counts[: n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes), counts)
    features = means[labels] + rng.standard_normal((n, input_dim))
    order = rng.permutation(n)
    features, labels = features[order], labels[order]

    train_idx, test_idx = _stratified_split(labels, test_fraction, rng)
    ds = Dataset(
        name=name or f"gauss-k{num_classes}-d{input_dim}-sep{separation:g}",
        features=features,
        labels=labels,
        train_idx=train_idx,
        test_idx=test_idx,
        label_values=tuple(range(num_classes)),
        provenance={
            "format": "synth_gaussian",
            "num_classes": num_classes,
            "input_dim": input_dim,
            "n": n,
            "separation": separation,
            "seed": seed,
        },
    )
    return ds.validate()
