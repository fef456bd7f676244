"""Greedy axis-parallel decision tree trainer (CART-style, Gini impurity).

Supplies warm starts for the MIP, the leaf clusters used by data
selection, and the comparison baseline.  Numeric splits test midpoints of
consecutive distinct sorted values; categorical splits are one-vs-rest on
each value, which keeps warm starts inside the categorical-branching
feasible set.  All tie-breaking is deterministic: lowest feature index,
then lowest threshold, and majority labels break ties toward the smallest
class index.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset


class CartError(ValueError):
    pass


@dataclass
class CartParams:
    max_depth: int = 2
    min_samples_split: int = 2


@dataclass
class AxisNode:
    is_leaf: bool
    label: int = 0
    feature: int = -1
    threshold: float = 0.0
    categorical_value: float | None = None
    left: "AxisNode | None" = None
    right: "AxisNode | None" = None


class AxisTree:
    def __init__(self, root, n_features):
        self.root = root
        self.n_features = n_features

    def depth(self):
        def walk(node):
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def route_one(self, x):
        node = self.root
        while not node.is_leaf:
            if node.categorical_value is not None:
                go_left = x[node.feature] == node.categorical_value
            else:
                go_left = x[node.feature] <= node.threshold
            node = node.left if go_left else node.right
        return node.label

    def predict(self, data):
        X = getattr(data, "points", data)
        return np.array([self.route_one(x) for x in np.asarray(X, dtype=float)])

    def accuracy(self, data):
        return float(np.mean(self.predict(data) == np.asarray(data.labels)))


def gini(counts):
    """Gini impurity 1 - sum((count/total)^2) of a class-count vector."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise CartError("negative class count")
    total = counts.sum()
    if total == 0:
        raise CartError("gini of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _class_counts(labels, num_classes):
    return np.bincount(labels, minlength=num_classes + 1)[1:]


def _majority(counts):
    return int(np.argmax(counts)) + 1  # first max = smallest class index


def _best_split(X, y, kinds, num_classes):
    """Best (feature, threshold-or-value, gain); gain strictly positive."""
    n = y.size
    parent = gini(_class_counts(y, num_classes))
    best = (None, 0.0, None, 0.0)  # feature, threshold, cat value, gain
    for j in range(X.shape[1]):
        col = X[:, j]
        if kinds[j].is_categorical:
            for v in np.unique(col):
                mask = col == v
                nl = int(mask.sum())
                if nl == 0 or nl == n:
                    continue
                cl = _class_counts(y[mask], num_classes)
                cr = _class_counts(y[~mask], num_classes)
                gain = parent - (nl * gini(cl) + (n - nl) * gini(cr)) / n
                if gain > best[3] + 1e-12:
                    best = (j, 0.0, float(v), gain)
        else:
            order = np.argsort(col, kind="stable")
            sc, sy = col[order], y[order]
            distinct = np.flatnonzero(np.diff(sc) > 0)
            if distinct.size == 0:
                continue
            total = _class_counts(sy, num_classes)
            left_counts = np.zeros(num_classes)
            k = 0
            for cut in distinct:
                while k <= cut:
                    left_counts[sy[k] - 1] += 1
                    k += 1
                thr = 0.5 * (sc[cut] + sc[cut + 1])
                nl = cut + 1
                gain = parent - (nl * gini(left_counts) + (n - nl) * gini(total - left_counts)) / n
                if gain > best[3] + 1e-12:
                    best = (j, float(thr), None, gain)
    return best


def train_cart(dataset: Dataset, params: CartParams) -> AxisTree:
    """Recursive best-Gini-gain axis tree of depth <= params.max_depth."""
    if dataset.n < 1:
        raise CartError("empty dataset")
    Y = dataset.num_classes

    def grow(idx, depth):
        y = dataset.labels[idx]
        counts = _class_counts(y, Y)
        if (depth >= params.max_depth or idx.size < params.min_samples_split
                or np.count_nonzero(counts) <= 1):
            return AxisNode(True, label=_majority(counts))
        j, thr, cat, gain = _best_split(dataset.points[idx], y,
                                        dataset.feature_kinds, Y)
        if j is None or gain <= 0.0:
            return AxisNode(True, label=_majority(counts))
        col = dataset.points[idx, j]
        mask = (col == cat) if cat is not None else (col <= thr)
        return AxisNode(False, feature=j, threshold=thr, categorical_value=cat,
                        left=grow(idx[mask], depth + 1),
                        right=grow(idx[~mask], depth + 1))

    return AxisTree(grow(np.arange(dataset.n), 0), dataset.d)
