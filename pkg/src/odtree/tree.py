"""Balanced-depth oblique decision trees and their ancestor-set combinatorics.

Nodes follow the implicit heap layout: branch nodes are 1..2^D-1 with
children 2b and 2b+1, leaves are 2^D..2^(D+1)-1.  A branch carries either
a hyperplane rule <h, x> <= g (ties route LEFT) or a categorical rule
"x_j in accepted set routes left", never both.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

MAX_DEPTH = 10


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class CategoricalRule:
    feature: int
    accepted: frozenset


class ObliqueTree:
    """Immutable depth-D tree: hyperplane (or categorical rule) per branch,
    class label per leaf.

    Parameters
    ----------
    depth : int, 1..10
    coeffs : (2^D - 1, d) array, hyperplane coefficients per branch
    biases : (2^D - 1,) array
    leaf_labels : (2^D,) int array of class labels (1-based)
    cat_rules : dict, optional
        branch index -> CategoricalRule; the branch's hyperplane row must
        be all zero.
    """

    def __init__(self, depth, coeffs, biases, leaf_labels, cat_rules=None):
        if not 1 <= depth <= MAX_DEPTH:
            raise TreeError(f"depth must be in 1..{MAX_DEPTH}, got {depth}")
        self.depth = int(depth)
        self.coeffs = np.array(coeffs, dtype=float)
        self.biases = np.array(biases, dtype=float)
        self.leaf_labels = np.array(leaf_labels, dtype=np.int64)
        self.cat_rules = dict(cat_rules or {})
        B, L = 2 ** self.depth - 1, 2 ** self.depth
        if self.coeffs.shape[0] != B or self.biases.shape != (B,):
            raise TreeError("coeffs/biases do not match the branch count")
        if self.leaf_labels.shape != (L,):
            raise TreeError("leaf_labels does not match the leaf count")
        if np.any(self.leaf_labels < 1):
            raise TreeError("leaf labels must be 1-based class indices")
        for b, rule in self.cat_rules.items():
            if not 1 <= b <= B:
                raise TreeError(f"categorical rule on non-branch node {b}")
            if np.any(self.coeffs[b - 1] != 0.0):
                raise TreeError(f"branch {b} has both hyperplane and categorical rule")
        for arr in (self.coeffs, self.biases, self.leaf_labels):
            arr.setflags(write=False)

    @property
    def num_features(self):
        return self.coeffs.shape[1]

    @property
    def branch_nodes(self):
        return range(1, 2 ** self.depth)

    @property
    def leaf_nodes(self):
        return range(2 ** self.depth, 2 ** (self.depth + 1))

    def goes_left(self, b, x):
        rule = self.cat_rules.get(b)
        if rule is not None:
            return int(x[rule.feature]) in rule.accepted
        return float(self.coeffs[b - 1] @ x) <= float(self.biases[b - 1])

    def route(self, x):
        """Leaf index reached by descending from the root; ties go left."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.num_features:
            raise TreeError("point dimension does not match the tree")
        b = 1
        for _ in range(self.depth):
            b = 2 * b if self.goes_left(b, x) else 2 * b + 1
        return b

    def route_many(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.num_features:
            raise TreeError("points dimension does not match the tree")
        node = np.ones(X.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            nxt = np.empty_like(node)
            for b in np.unique(node):
                mask = node == b
                rule = self.cat_rules.get(int(b))
                if rule is not None:
                    left = np.isin(X[mask, rule.feature].astype(np.int64),
                                   list(rule.accepted))
                else:
                    left = X[mask] @ self.coeffs[b - 1] <= self.biases[b - 1]
                nxt[mask] = np.where(left, 2 * b, 2 * b + 1)
            node = nxt
        return node

    def predict(self, data):
        """Predicted labels; accepts a Dataset or a raw point matrix."""
        X = getattr(data, "points", data)
        leaves = self.route_many(X)
        return self.leaf_labels[leaves - 2 ** self.depth]

    def accuracy(self, data):
        yhat = self.predict(data)
        return float(np.mean(yhat == np.asarray(data.labels)))

    def misclassified(self, data):
        yhat = self.predict(data)
        return int(np.sum(yhat != np.asarray(data.labels)))

    # -- serialization ----------------------------------------------------

    def to_json(self):
        branches = []
        for b in self.branch_nodes:
            rule = self.cat_rules.get(b)
            if rule is not None:
                branches.append({"categorical": {
                    "feature": rule.feature,
                    "accepted_values": sorted(rule.accepted)}})
            else:
                branches.append({"h": [float(v) for v in self.coeffs[b - 1]],
                                 "g": float(self.biases[b - 1])})
        doc = {"depth": self.depth, "branches": branches,
               "leaves": [int(v) for v in self.leaf_labels]}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        depth = doc["depth"]
        B = 2 ** depth - 1
        branches = doc["branches"]
        if len(branches) != B:
            raise TreeError("branch count does not match depth")
        d = next((len(br["h"]) for br in branches if "h" in br), 1)
        coeffs = np.zeros((B, d))
        biases = np.zeros(B)
        cat_rules = {}
        for k, br in enumerate(branches):
            if "categorical" in br:
                cat = br["categorical"]
                cat_rules[k + 1] = CategoricalRule(
                    int(cat["feature"]), frozenset(int(v) for v in cat["accepted_values"]))
            else:
                coeffs[k] = br["h"]
                biases[k] = br["g"]
        return cls(depth, coeffs, biases, doc["leaves"], cat_rules)

    def __eq__(self, other):
        return (isinstance(other, ObliqueTree)
                and self.depth == other.depth
                and np.array_equal(self.coeffs, other.coeffs)
                and np.array_equal(self.biases, other.biases)
                and np.array_equal(self.leaf_labels, other.leaf_labels)
                and self.cat_rules == other.cat_rules)


@dataclass(frozen=True)
class AncestorSets:
    """Per-leaf left/right ancestor branches and per-branch descendant leaves."""
    depth: int
    left: dict     # leaf -> tuple of branches reached from their left child
    right: dict    # leaf -> tuple of branches reached from their right child
    leaves_under: dict  # branch -> tuple of descendant leaves


def ancestor_sets(depth):
    """Walk each leaf's heap path to the root, splitting ancestors by side."""
    if not 1 <= depth <= MAX_DEPTH:
        raise TreeError(f"depth must be in 1..{MAX_DEPTH}, got {depth}")
    left, right = {}, {}
    leaves_under = {b: [] for b in range(1, 2 ** depth)}
    for leaf in range(2 ** depth, 2 ** (depth + 1)):
        al, ar = [], []
        node = leaf
        while node > 1:
            parent = node // 2
            (al if node == 2 * parent else ar).append(parent)
            leaves_under[parent].append(leaf)
            node = parent
        left[leaf] = tuple(sorted(al))
        right[leaf] = tuple(sorted(ar))
    return AncestorSets(depth, left, right,
                        {b: tuple(sorted(ls)) for b, ls in leaves_under.items()})


def axis_to_oblique(axis_tree, depth, n_features):
    """Embed an axis-parallel tree into a balanced depth-`depth` oblique tree.

    Each split "x_j <= t goes left" becomes the unit-coefficient hyperplane
    (e_j, t); shallower subtrees are padded with pass-through branches
    (h = 0, g = 0, which route everything left) and duplicated leaf labels,
    so every training point routes to a leaf with the original label.
    """
    if axis_tree.depth() > depth:
        raise TreeError(
            f"axis tree depth {axis_tree.depth()} exceeds target {depth}")
    B, L = 2 ** depth - 1, 2 ** depth
    coeffs = np.zeros((B, n_features))
    biases = np.zeros(B)
    labels = np.ones(L, dtype=np.int64)
    cat_rules = {}

    def fill(node, heap_idx, level):
        if level == depth:
            labels[heap_idx - L] = node.label if node.is_leaf else _majority(node)
            return
        if node.is_leaf:
            # pass-through branch: everything goes left, label duplicated
            fill(node, 2 * heap_idx, level + 1)
            fill(node, 2 * heap_idx + 1, level + 1)
            return
        if node.categorical_value is not None:
            cat_rules[heap_idx] = CategoricalRule(
                node.feature, frozenset([int(node.categorical_value)]))
        else:
            coeffs[heap_idx - 1, node.feature] = 1.0
            biases[heap_idx - 1] = node.threshold
        fill(node.left, 2 * heap_idx, level + 1)
        fill(node.right, 2 * heap_idx + 1, level + 1)

    def _majority(node):
        while not node.is_leaf:
            node = node.left
        return node.label

    fill(axis_tree.root, 1, 0)
    return ObliqueTree(depth, coeffs, biases, labels, cat_rules)
