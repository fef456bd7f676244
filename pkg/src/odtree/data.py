"""Dataset loading, validation, normalization, stratified splitting, and
the per-leaf clustering used by data selection.

Datasets are immutable after construction: labels are re-encoded to
contiguous 1..Y by first appearance, categorical columns hold integer
codes into their declared value sets, and min-max scaling parameters are
retained so the same transform can be applied to held-out data.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureKind:
    kind: str
    values: tuple = ()  # declared value set, categorical columns only

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: np.ndarray            # 1..Y
    feature_kinds: tuple
    feature_names: tuple = ()
    label_name: str = "label"
    label_values: tuple = ()      # original label per encoded class, 1-based order
    class_sizes: tuple = ()
    scaling: tuple | None = None  # (mins, ranges) over numeric columns

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        labs = np.asarray(self.labels, dtype=np.int64)
        if pts.ndim != 2 or labs.ndim != 1 or pts.shape[0] != labs.shape[0]:
            raise DataError("points must be n x d with one label per row")
        if len(self.feature_kinds) != pts.shape[1]:
            raise DataError("feature_kinds must cover every column")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labs)
        if not self.class_sizes:
            y = int(labs.max(initial=0))
            sizes = tuple(int(np.sum(labs == k)) for k in range(1, y + 1))
            object.__setattr__(self, "class_sizes", sizes)
        if labs.size and (labs.min() < 1 or labs.max() > len(self.class_sizes)):
            raise DataError("labels must lie in 1..Y")
        for j, fk in enumerate(self.feature_kinds):
            if fk.is_categorical:
                col = pts[:, j]
                if col.size and (np.any(col != np.round(col)) or col.min() < 0
                                 or col.max() >= len(fk.values)):
                    raise DataError(f"column {j}: categorical codes outside value set")
        pts.setflags(write=False)
        labs.setflags(write=False)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def num_classes(self):
        return len(self.class_sizes)

    @property
    def numeric_columns(self):
        return [j for j, fk in enumerate(self.feature_kinds) if not fk.is_categorical]

    @property
    def categorical_columns(self):
        return [j for j, fk in enumerate(self.feature_kinds) if fk.is_categorical]

    def decode_labels(self, encoded):
        return [self.label_values[k - 1] for k in np.asarray(encoded)]

    def subset(self, indices):
        """Row subset preserving encoding, feature kinds, and scaling."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.points[idx], self.labels[idx], self.feature_kinds,
                       self.feature_names, self.label_name, self.label_values,
                       class_sizes=tuple(int(np.sum(self.labels[idx] == k))
                                         for k in range(1, self.num_classes + 1)),
                       scaling=self.scaling)

    def class_partition(self):
        return ClassPartition.from_labels(self.labels, self.num_classes)


@dataclass(frozen=True)
class ClassPartition:
    members: tuple      # per class k (1-based order): array of row indices
    sorted_sizes: tuple  # class sizes in nondecreasing order

    @classmethod
    def from_labels(cls, labels, num_classes):
        labels = np.asarray(labels)
        members = tuple(np.flatnonzero(labels == k) for k in range(1, num_classes + 1))
        return cls(members, tuple(sorted(len(m) for m in members)))

    @property
    def num_classes(self):
        return len(self.members)


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray
    fold_of: np.ndarray  # fold id per entry of train_indices

    @property
    def folds(self):
        return int(self.fold_of.max(initial=-1)) + 1


def load_csv(path, label_column, feature_kind_overrides=None):
    """Load a UTF-8 comma-separated file with a header row into a Dataset.

    Labels are re-encoded to contiguous 1..Y in first-appearance order.
    Columns named in `feature_kind_overrides` with value "categorical" keep
    their raw values as a declared value set; every other column must parse
    as a float.
    """
    overrides = dict(feature_kind_overrides or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    if label_column not in header:
        raise DataError(f"{path}: missing label column {label_column!r}")
    for col in overrides:
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    label_pos = header.index(label_column)
    feat_names = [h for i, h in enumerate(header) if i != label_pos]
    feat_pos = [i for i in range(len(header)) if i != label_pos]

    label_codes = {}
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        raw = row[label_pos]
        labels[i] = label_codes.setdefault(raw, len(label_codes) + 1)
    if len(label_codes) < 2:
        raise DataError(f"{path}: single-class data (Y=1) rejected")

    points = np.empty((len(rows), len(feat_names)))
    kinds = []
    for j, (name, pos) in enumerate(zip(feat_names, feat_pos)):
        if overrides.get(name) == CATEGORICAL:
            codes = {}
            for i, row in enumerate(rows):
                points[i, j] = codes.setdefault(row[pos], len(codes))
            kinds.append(FeatureKind(CATEGORICAL, tuple(codes)))
        else:
            for i, row in enumerate(rows):
                try:
                    points[i, j] = float(row[pos])
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {row[pos]!r} in numeric "
                        f"column {name!r} (row {i + 2})") from None
            kinds.append(FeatureKind(NUMERIC))
    return Dataset(points, labels, tuple(kinds), tuple(feat_names),
                   label_column, tuple(label_codes))


def normalize(dataset):
    """Min-max scale every numeric column to [0, 1]; constant columns map
    to all-zeros.  The (min, range) pairs are retained on the result so the
    identical transform can be applied to held-out data."""
    pts = dataset.points.copy()
    num = dataset.numeric_columns
    sub = pts[:, num]
    if not np.all(np.isfinite(sub)):
        raise DataError("normalize requires finite numeric values")
    mins = sub.min(axis=0) if sub.size else np.zeros(len(num))
    ranges = (sub.max(axis=0) - mins) if sub.size else np.ones(len(num))
    ranges = np.where(ranges > 0, ranges, 1.0)  # constant columns -> zeros
    pts[:, num] = (sub - mins) / ranges
    return Dataset(pts, dataset.labels, dataset.feature_kinds,
                   dataset.feature_names, dataset.label_name,
                   dataset.label_values, dataset.class_sizes,
                   scaling=(tuple(num), mins, ranges))


def apply_scaling(dataset, scaling):
    """Apply previously fitted (columns, mins, ranges) to another Dataset."""
    cols, mins, ranges = scaling
    pts = dataset.points.copy()
    pts[:, list(cols)] = (pts[:, list(cols)] - mins) / ranges
    return Dataset(pts, dataset.labels, dataset.feature_kinds,
                   dataset.feature_names, dataset.label_name,
                   dataset.label_values, dataset.class_sizes, scaling=scaling)


def stratified_split(dataset, train_fraction, folds=1, seed=0):
    """Deterministic stratified train/test split plus k-fold assignments.

    The train size is round(train_fraction * n); per-class counts follow a
    largest-remainder allocation so every class proportion stays within one
    sample of the global fraction.  Folds are dealt round-robin per class.
    """
    if not 0 < train_fraction < 1:
        raise DataError("train_fraction must be in (0, 1)")
    if folds < 1:
        raise DataError("folds must be >= 1")
    rng = np.random.default_rng(seed)
    part = dataset.class_partition()
    target = int(math.floor(train_fraction * dataset.n + 0.5))
    quotas = [train_fraction * len(m) for m in part.members]
    base = [int(math.floor(q)) for q in quotas]
    # hand out the remaining seats by largest fractional remainder, ties by class
    order = sorted(range(len(base)), key=lambda k: (-(quotas[k] - base[k]), k))
    left_over = target - sum(base)
    for k in order[:max(0, left_over)]:
        base[k] += 1
    train, test, fold_ids = [], [], []
    for k, members in enumerate(part.members):
        m = members.copy()
        rng.shuffle(m)
        n_train = min(base[k], len(m))
        if folds > 1 and n_train < folds:
            raise DataError(
                f"class {k + 1} has {n_train} training samples, fewer than {folds} folds")
        train.extend(m[:n_train])
        test.extend(m[n_train:])
        fold_ids.extend((i % folds) for i in range(n_train))
    train = np.array(train, dtype=np.int64)
    fold_ids = np.array(fold_ids, dtype=np.int64)
    order = np.argsort(train, kind="stable")
    return Split(train[order], np.sort(np.array(test, dtype=np.int64)), fold_ids[order])


@dataclass(frozen=True)
class LeafCluster:
    leaf: int
    label: int
    indices: np.ndarray  # rows correctly classified at this leaf


def cluster_by_leaf(dataset, tree):
    """Group correctly classified points by the leaf that captures them.

    Returns (clusters, misclassified): one cluster per non-empty
    (leaf, class) pair of correctly classified points, plus the index set
    of misclassified points, which iterative training always keeps.
    """
    if tree.num_features != dataset.d:
        raise DataError("tree and dataset dimensions do not match")
    leaves = tree.route_many(dataset.points)
    labels = tree.leaf_labels[leaves - 2 ** tree.depth]
    correct = labels == dataset.labels
    clusters = []
    for leaf in tree.leaf_nodes:
        idx = np.flatnonzero((leaves == leaf) & correct)
        if idx.size:
            clusters.append(LeafCluster(int(leaf),
                                        int(tree.leaf_labels[leaf - 2 ** tree.depth]),
                                        idx))
    return clusters, np.flatnonzero(~correct)
