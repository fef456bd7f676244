"""Shared fixtures and independent oracles used across the test suite.

The oracles here are deliberately implemented without touching the
library's solver paths: the best-separator search enumerates perturbed
hyperplanes through point pairs, and hull membership enumerates
Caratheodory subsets directly.
"""

import csv
import math
import os

import numpy as np
import pytest

from odtree.data import Dataset, FeatureKind

NUMERIC2 = (FeatureKind("numeric"), FeatureKind("numeric"))


def make_dataset(points, labels):
    points = np.asarray(points, dtype=float)
    kinds = tuple(FeatureKind("numeric") for _ in range(points.shape[1]))
    return Dataset(points, np.asarray(labels, dtype=np.int64), kinds)


def random_separable_instance(rng, n, d=2, num_classes=2):
    """Points labeled by a random hyperplane; both classes nonempty."""
    while True:
        pts = rng.uniform(size=(n, d))
        h = rng.normal(size=d)
        g = float(h @ rng.uniform(0.25, 0.75, size=d))
        labels = np.where(pts @ h <= g, 1, 2)
        if len(np.unique(labels)) == num_classes:
            return make_dataset(pts, labels)


def random_instance(rng, n, d=2, num_classes=2):
    while True:
        pts = rng.uniform(size=(n, d))
        labels = rng.integers(1, num_classes + 1, size=n)
        if len(np.unique(labels)) == num_classes:
            return make_dataset(pts, labels)


def _side_misclass(labels, mask):
    total = 0
    for part in (labels[mask], labels[~mask]):
        if part.size:
            counts = np.bincount(part)
            total += part.size - counts.max()
    return total


def best_separator_misclass(points, labels, delta=1e-7):
    """Brute-force minimum misclassification over single oblique splits.

    Candidates: the line through every point pair, shifted by +-delta
    along its normal and rotated by +-delta around each endpoint, plus
    the everything-on-one-side split.  Leaf labels are majorities.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    n = len(points)
    best = _side_misclass(labels, np.ones(n, dtype=bool))
    for i in range(n):
        for j in range(i + 1, n):
            u = points[j] - points[i]
            nu = float(np.hypot(u[0], u[1]))
            if nu == 0.0:
                continue
            normal = np.array([-u[1], u[0]]) / nu
            candidates = []
            base_g = float(normal @ points[i])
            candidates.append((normal, base_g + delta))
            candidates.append((normal, base_g - delta))
            for center in (points[i], points[j]):
                for ang in (delta, -delta):
                    ca, sa = math.cos(ang), math.sin(ang)
                    rot = np.array([ca * normal[0] - sa * normal[1],
                                    sa * normal[0] + ca * normal[1]])
                    candidates.append((rot, float(rot @ center)))
            for h, g in candidates:
                mask = points @ h <= g
                best = min(best, _side_misclass(labels, mask))
    return best


def hull_interior_mask(points, tol=1e-9):
    """Caratheodory-enumeration oracle for 2-D clusters: point j is
    "interior" when it is a convex combination of at most 3 of the other
    points (duplicate, on a segment, or inside a triangle)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    assert points.shape[1] == 2
    out = np.zeros(n, dtype=bool)
    for j in range(n):
        others = [i for i in range(n) if i != j]
        x = points[j]
        found = any(np.all(np.abs(points[i] - x) <= tol) for i in others)
        if not found:
            for ai in range(len(others)):
                for bi in range(ai + 1, len(others)):
                    a, b = points[others[ai]], points[others[bi]]
                    ab = b - a
                    cross = ab[0] * (x - a)[1] - ab[1] * (x - a)[0]
                    denom = float(ab @ ab)
                    if abs(cross) <= tol and denom > tol:
                        t = float((x - a) @ ab) / denom
                        if -tol <= t <= 1 + tol:
                            found = True
                            break
                if found:
                    break
        if not found:
            for ai in range(len(others)):
                for bi in range(ai + 1, len(others)):
                    for ci in range(bi + 1, len(others)):
                        a = points[others[ai]]
                        b = points[others[bi]]
                        c = points[others[ci]]
                        det = (b[0] - a[0]) * (c[1] - a[1]) \
                            - (c[0] - a[0]) * (b[1] - a[1])
                        if abs(det) <= tol:
                            continue
                        l1 = ((x[0] - a[0]) * (c[1] - a[1])
                              - (c[0] - a[0]) * (x[1] - a[1])) / det
                        l2 = ((b[0] - a[0]) * (x[1] - a[1])
                              - (x[0] - a[0]) * (b[1] - a[1])) / det
                        if l1 >= -tol and l2 >= -tol and l1 + l2 <= 1 + tol:
                            found = True
                            break
                    if found:
                        break
                if found:
                    break
        out[j] = found
    return out


@pytest.fixture(scope="session")
def iris_csv(tmp_path_factory):
    sklearn = pytest.importorskip("sklearn.datasets")
    data = sklearn.load_iris()
    path = tmp_path_factory.mktemp("data") / "iris.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sepal_length", "sepal_width", "petal_length",
                         "petal_width", "class"])
        names = data.target_names
        for row, target in zip(data.data, data.target):
            writer.writerow([repr(float(v)) for v in row] + [names[target]])
    return str(path)


@pytest.fixture(scope="session")
def iris_dataset(iris_csv):
    from odtree.data import load_csv
    return load_csv(iris_csv, "class")
