import numpy as np
import pytest

from odtree.cart import CartError, CartParams, gini, train_cart
from odtree.data import Dataset, FeatureKind, normalize

from conftest import make_dataset


class TestGini:
    def test_pure_node(self):
        assert gini([10, 0]) == 0.0

    def test_even_two_way(self):
        assert gini([5, 5]) == pytest.approx(0.5)

    def test_even_three_way(self):
        assert gini([1, 1, 1]) == pytest.approx(2.0 / 3.0)

    def test_empty_rejected(self):
        with pytest.raises(CartError):
            gini([0, 0])

    def test_negative_rejected(self):
        with pytest.raises(CartError):
            gini([-1, 2])


class TestTrainCart:
    def test_one_dimensional_split(self):
        ds = make_dataset([[0.0], [1.0]], [1, 2])
        tree = train_cart(ds, CartParams(max_depth=1))
        assert not tree.root.is_leaf
        assert tree.root.threshold == pytest.approx(0.5)
        assert tree.accuracy(ds) == 1.0

    def test_pure_data_single_leaf(self):
        ds = Dataset(np.array([[0.1], [0.9]]), np.array([2, 2]),
                     (FeatureKind("numeric"),), class_sizes=(0, 2))
        tree = train_cart(ds, CartParams(max_depth=3))
        assert tree.root.is_leaf
        assert tree.root.label == 2

    def test_majority_tie_smallest_class(self):
        ds = make_dataset([[0.5], [0.5]], [2, 1])
        tree = train_cart(ds, CartParams(max_depth=1))
        assert tree.root.is_leaf
        assert tree.root.label == 1

    def test_iris_depth2_accuracy(self, iris_dataset):
        ds = normalize(iris_dataset)
        tree = train_cart(ds, CartParams(max_depth=2))
        assert tree.accuracy(ds) >= 0.90

    def test_chosen_split_maximizes_gain(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(size=(12, 2))
        labels = rng.integers(1, 3, size=12)
        if len(np.unique(labels)) < 2:
            labels[0] = 3 - labels[0]
        ds = make_dataset(pts, labels)
        tree = train_cart(ds, CartParams(max_depth=1))
        if tree.root.is_leaf:
            pytest.skip("no positive-gain split exists")
        chosen = (tree.root.feature, tree.root.threshold)

        def weighted_gini(mask):
            out = 0.0
            for part in (labels[mask], labels[~mask]):
                if part.size:
                    p = np.bincount(part)[1:] / part.size
                    out += part.size * (1 - np.sum(p * p))
            return out / 12

        best = None
        for j in range(2):
            vals = np.unique(pts[:, j])
            for t in (vals[:-1] + vals[1:]) / 2:
                score = weighted_gini(pts[:, j] <= t)
                best = score if best is None else min(best, score)
        assert weighted_gini(pts[:, chosen[0]] <= chosen[1]) == pytest.approx(best)

    def test_accuracy_monotone_in_depth(self):
        rng = np.random.default_rng(6)
        pts = rng.uniform(size=(60, 3))
        labels = 1 + (pts[:, 0] > 0.5).astype(int) + (pts[:, 1] > 0.6)
        ds = make_dataset(pts, labels)
        accs = [train_cart(ds, CartParams(max_depth=d)).accuracy(ds)
                for d in range(1, 5)]
        assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(size=(30, 4))
        labels = rng.integers(1, 4, size=30)
        ds = make_dataset(pts, labels)
        t1 = train_cart(ds, CartParams(max_depth=3))
        t2 = train_cart(ds, CartParams(max_depth=3))
        assert np.array_equal(t1.predict(ds), t2.predict(ds))

    def test_categorical_one_vs_rest(self):
        kinds = (FeatureKind("categorical", ("a", "b", "c")),)
        pts = np.array([[0.0], [0.0], [1.0], [2.0]])
        ds = Dataset(pts, np.array([1, 1, 2, 2]), kinds)
        tree = train_cart(ds, CartParams(max_depth=1))
        assert not tree.root.is_leaf
        assert tree.root.categorical_value == 0.0
        assert tree.accuracy(ds) == 1.0

    def test_min_samples_split(self):
        ds = make_dataset([[0.0], [1.0]], [1, 2])
        tree = train_cart(ds, CartParams(max_depth=3, min_samples_split=3))
        assert tree.root.is_leaf
