import numpy as np
import pytest

from odtree.data import LeafCluster
from odtree.selection import (
    SelectionError,
    SelectionParams,
    balanced_selection,
    hyperplane_distance_select,
    partition_sets,
    select_all,
    select_cluster,
    selection_lp_cluster,
    selection_lp_point,
)
from odtree.milp import CONTINUOUS, EQ, LE, INF, MilpModel, solve_lp_simplex
from odtree.tree import ObliqueTree

from conftest import hull_interior_mask, make_dataset

SQUARE_PLUS_CENTER = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0],
                               [0.5, 0.5]])


def monolithic_cluster_lp(points, eps_prime=0.0):
    """Whole-cluster LP built as one model; oracle for the decomposition."""
    k, d = points.shape
    m = MilpModel("selection-monolithic")
    b = [m.add_variable(f"b_{j}", CONTINUOUS, 0.0, 1.0, obj=-1.0) for j in range(k)]
    lam = {}
    for j in range(k):
        for i in range(k):
            if i != j:
                lam[j, i] = m.add_variable(f"lam_{j}_{i}", CONTINUOUS, 0.0, INF)
    for j in range(k):
        for r in range(d):
            row = {b[j]: points[j, r]}
            for i in range(k):
                if i != j and points[i, r] != 0.0:
                    row[lam[j, i]] = -points[i, r]
            if eps_prime == 0.0:
                m.add_constraint(row, EQ, 0.0)
            else:
                m.add_constraint(row, LE, eps_prime)
                m.add_constraint({v: -c for v, c in row.items()}, LE, eps_prime)
        row = {lam[j, i]: 1.0 for i in range(k) if i != j}
        row[b[j]] = -1.0
        m.add_constraint(row, EQ, 0.0)
    sol = solve_lp_simplex(m)
    return -sol.objective  # max sum(b)


class TestPointLp:
    def test_center_of_square_inside(self):
        b, lam = selection_lp_point(SQUARE_PLUS_CENTER, 4, eps_prime=0.0)
        assert b == pytest.approx(1.0)
        combo = lam @ SQUARE_PLUS_CENTER
        assert np.allclose(combo, SQUARE_PLUS_CENTER[4])
        assert lam.sum() == pytest.approx(1.0)

    def test_corner_not_expressible(self):
        b, lam = selection_lp_point(SQUARE_PLUS_CENTER, 0, eps_prime=0.0)
        assert b == pytest.approx(0.0, abs=1e-9)

    def test_duplicate_expressed_by_twin(self):
        pts = np.array([[0.3, 0.7], [0.3, 0.7]])
        b, lam = selection_lp_point(pts, 0, eps_prime=0.0)
        assert b == pytest.approx(1.0)
        assert lam[1] == pytest.approx(1.0)

    def test_row_count_matches_decomposition(self):
        # d+2 rows at eps'=0; the band doubles otherwise
        from odtree.selection import _point_lp_arrays
        A, rhs, senses, c = _point_lp_arrays(SQUARE_PLUS_CENTER, 0.0)
        assert A.shape[0] == 2 + 2
        A2, *_ = _point_lp_arrays(SQUARE_PLUS_CENTER, 0.1)
        assert A2.shape[0] == 2 * 2 + 2

    def test_cluster_too_small(self):
        with pytest.raises(SelectionError):
            selection_lp_point(np.array([[0.1, 0.2]]), 0)


class TestClusterLp:
    def test_square_matches_monolithic(self):
        bvec, lam = selection_lp_cluster(SQUARE_PLUS_CENTER, 0.0)
        assert bvec.sum() == pytest.approx(
            monolithic_cluster_lp(SQUARE_PLUS_CENTER), abs=1e-6)
        assert list(np.flatnonzero(bvec > 0.5)) == [4]

    def test_collinear_midpoint(self):
        pts = np.array([[0.0], [0.5], [1.0]])
        bvec, _ = selection_lp_cluster(pts, 0.0)
        assert list(np.flatnonzero(bvec > 0.5)) == [1]

    def test_band_admits_point_slightly_outside(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0],
                        [1.05, 0.5]])
        b0, _ = selection_lp_cluster(pts, 0.0)
        b1, _ = selection_lp_cluster(pts, 0.1)
        assert b0[4] < 1.0 - 1e-9
        assert b1[4] == pytest.approx(1.0)

    def test_parallel_matches_sequential(self):
        rng = np.random.default_rng(123)
        pts = rng.integers(0, 11, size=(30, 2)) / 10.0
        seq_b, seq_lam = selection_lp_cluster(pts, 0.0, parallel=False)
        par_b, par_lam = selection_lp_cluster(pts, 0.0, parallel=True, workers=2)
        assert np.array_equal(seq_b, par_b)
        assert np.array_equal(seq_lam, par_lam)

    @pytest.mark.parametrize("trial", range(8))
    def test_inside_set_matches_hull_oracle(self, trial):
        rng = np.random.default_rng(2000 + trial)
        k = int(rng.integers(4, 13))
        pts = rng.integers(0, 11, size=(k, 2)) / 10.0
        bvec, _ = selection_lp_cluster(pts, 0.0)
        lp_inside = bvec > 0.5
        assert np.array_equal(lp_inside, hull_interior_mask(pts))

    def test_decomposed_equals_monolithic_objective(self):
        rng = np.random.default_rng(77)
        for _ in range(3):
            k = int(rng.integers(4, 10))
            pts = rng.integers(0, 11, size=(k, 2)) / 10.0
            bvec, _ = selection_lp_cluster(pts, 0.0)
            assert bvec.sum() == pytest.approx(monolithic_cluster_lp(pts), abs=1e-6)


class TestPartition:
    def test_quarter_weights_below_threshold(self):
        # weights fed manually: 1/4 each < 1/3 threshold, so no expresser
        # is heavy and the corners land in the remainder
        lam = np.zeros((5, 5))
        lam[4, :4] = 0.25
        b = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
        res = partition_sets(np.arange(5), b, lam, d=2)
        assert list(res.inside) == [4]
        assert list(res.heavy) == []
        assert sorted(res.rest) == [0, 1, 2, 3]

    def test_third_weights_inclusive_boundary(self):
        lam = np.zeros((4, 4))
        lam[3, :3] = 1.0 / 3.0
        b = np.array([0.0, 0.0, 0.0, 1.0])
        res = partition_sets(np.arange(4), b, lam, d=2)
        assert sorted(res.heavy) == [0, 1, 2]

    def test_empty_inside(self):
        lam = np.zeros((3, 3))
        b = np.zeros(3)
        res = partition_sets(np.arange(3), b, lam, d=2)
        assert len(res.inside) == 0 and len(res.heavy) == 0
        assert sorted(res.rest) == [0, 1, 2]

    def test_heavy_bound(self):
        rng = np.random.default_rng(5)
        pts = rng.integers(0, 11, size=(12, 2)) / 10.0
        bvec, lam = selection_lp_cluster(pts, 0.0)
        res = partition_sets(np.arange(12), bvec, lam, d=2)
        assert len(res.heavy) <= 3 * max(1, len(res.inside))
        # partition property
        all_local = sorted([*res.inside, *res.heavy, *res.rest])
        assert all_local == list(range(12))


class TestHyperplaneSelect:
    def test_nearest_point_wins(self):
        pts = np.array([[0.1, 0.0], [0.4, 0.0], [0.9, 0.0]])
        out = hyperplane_distance_select(pts, [(np.array([1.0, 0.0]), 0.5)], 1)
        assert list(out) == [1]

    def test_count_zero(self):
        pts = np.array([[0.1, 0.0]])
        assert hyperplane_distance_select(pts, [(np.array([1.0, 0.0]), 0.5)], 0).size == 0

    def test_saturation(self):
        pts = np.array([[0.1, 0.0], [0.4, 0.0]])
        out = hyperplane_distance_select(pts, [(np.array([1.0, 0.0]), 0.5)], 10)
        assert sorted(out) == [0, 1]

    def test_tie_broken_by_index(self):
        pts = np.array([[0.6, 0.0], [0.4, 0.0]])  # both at distance 0.1
        out = hyperplane_distance_select(pts, [(np.array([1.0, 0.0]), 0.5)], 1)
        assert list(out) == [0]

    def test_degenerate_hyperplanes_fall_back_to_seeded_sample(self):
        pts = np.arange(10, dtype=float).reshape(10, 1) / 10
        a = hyperplane_distance_select(pts, [(np.zeros(1), 0.0)], 3, seed=4)
        b = hyperplane_distance_select(pts, [(np.zeros(1), 0.0)], 3, seed=4)
        assert np.array_equal(a, b)
        assert a.size == 3


class TestSelectClusterBranches:
    def _tree(self):
        return ObliqueTree(1, [[1.0, 0.0]], [0.5], [1, 2])

    def test_branch_outside_hull(self):
        # inside share 1/5 = 0.2 >= 1 - 0.9: keep the four corners
        ds = make_dataset(SQUARE_PLUS_CENTER, [1] * 5)
        cluster = LeafCluster(2, 1, np.arange(5))
        params = SelectionParams(beta1=0.9, beta2=0.2)
        res = select_cluster(ds, cluster, params, self._tree())
        assert res.branch == "outside-hull"
        assert sorted(res.selected) == [0, 1, 2, 3]

    def test_branch_heavy(self):
        # triangle + centroid: the only expression uses all three vertices
        # at weight exactly 1/3 (inclusive threshold), and 3 > beta2 * 4
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, 1.0 / 3.0]])
        ds = make_dataset(pts, [1] * 4)
        cluster = LeafCluster(2, 1, np.arange(4))
        params = SelectionParams(beta1=0.5, beta2=0.5)
        res = select_cluster(ds, cluster, params, self._tree())
        assert res.branch == "heavy"
        assert sorted(res.selected) == [0, 1, 2]

    def test_branch_near_boundary(self):
        # convex hexagon: nothing inside, nothing heavy; budget of 3 points
        # nearest to the warm tree's hyperplane x0 = 0.5, ties by index
        pts = np.array([[1.0, 0.5], [0.75, 0.9], [0.25, 0.9], [0.0, 0.5],
                        [0.25, 0.1], [0.75, 0.1]])
        ds = make_dataset(pts, [1] * 6)
        cluster = LeafCluster(2, 1, np.arange(6))
        params = SelectionParams(beta1=0.5, beta2=0.5)
        res = select_cluster(ds, cluster, params, self._tree())
        assert res.branch == "heavy+near-boundary"
        assert sorted(res.selected) == [1, 2, 4]

    def test_invalid_beta_combination(self):
        ds = make_dataset(SQUARE_PLUS_CENTER, [1] * 5)
        cluster = LeafCluster(2, 1, np.arange(5))
        with pytest.raises(SelectionError, match="beta2"):
            select_cluster(ds, cluster, SelectionParams(beta1=0.99, beta2=0.9),
                           self._tree())


class TestBalanced:
    def test_identical_points_pick_one(self):
        pts = np.tile(np.array([[0.3, 0.4]]), (4, 1))
        res = balanced_selection(pts)
        assert res.exact
        assert len(res.selected) == 1

    def test_general_position_selects_nothing(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        res = balanced_selection(pts)
        assert res.exact
        assert len(res.selected) == 0
        assert res.objective == pytest.approx(0.0, abs=1e-9)

    def test_rectangle_inside_circle_prefers_rectangle(self):
        # circle points enclose a dense rectangle; balancing selection size
        # against coverage keeps fewer points than pure hull selection
        angles = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
        circle = 0.5 + 0.5 * np.column_stack([np.cos(angles), np.sin(angles)])
        rect = np.array([[0.35, 0.45], [0.65, 0.45], [0.35, 0.55], [0.65, 0.55]])
        inner = np.array([[0.45, 0.5], [0.55, 0.5], [0.5, 0.48], [0.5, 0.52],
                          [0.48, 0.5], [0.52, 0.5]])
        pts = np.vstack([circle, rect, inner])
        res = balanced_selection(pts)
        hull_b, _ = selection_lp_cluster(pts, 0.0)
        pure_hull_selection = int(np.sum(hull_b < 0.5))  # all non-inside points
        assert len(res.selected) < pure_hull_selection
        # every covered point is expressible by the selected ones
        assert res.objective <= 0.0

    def test_needs_two_points(self):
        with pytest.raises(SelectionError):
            balanced_selection(np.array([[0.1, 0.2]]))


class TestSelectAll:
    def _tree(self):
        return ObliqueTree(1, [[1.0, 0.0]], [0.5], [1, 2])

    def test_misclassified_always_kept(self):
        rng = np.random.default_rng(31)
        pts = rng.uniform(size=(40, 2))
        labels = np.where(pts[:, 0] <= 0.5, 1, 2)
        flip = rng.choice(40, size=6, replace=False)
        labels[flip] = 3 - labels[flip]
        ds = make_dataset(pts, labels)
        summary = select_all(ds, self._tree(), SelectionParams(beta2=0.1))
        assert set(summary.misclassified) <= set(summary.reduced_indices)
        assert sorted(summary.misclassified) == sorted(flip)

    def test_sizes_account(self):
        rng = np.random.default_rng(32)
        pts = rng.uniform(size=(50, 2))
        labels = np.where(pts[:, 0] <= 0.5, 1, 2)
        ds = make_dataset(pts, labels)
        summary = select_all(ds, self._tree(), SelectionParams(beta1=0.3, beta2=0.2))
        assert summary.n_total == 50
        assert 0 < summary.fraction <= 1.0
        for res in summary.per_cluster:
            assert len(res.inside) + len(res.heavy) + len(res.rest) == res.size

    def test_perfect_tree_no_misclassified(self):
        pts = np.vstack([SQUARE_PLUS_CENTER * 0.4,
                         SQUARE_PLUS_CENTER * 0.4 + np.array([0.6, 0.0])])
        labels = np.array([1] * 5 + [2] * 5)
        ds = make_dataset(pts, labels)
        summary = select_all(ds, self._tree(), SelectionParams(beta1=0.9, beta2=0.2))
        assert summary.misclassified.size == 0
        # two clusters, each keeps its four corners
        assert len(summary.reduced_indices) == 8

    def test_balanced_variant_runs(self):
        rng = np.random.default_rng(34)
        pts = rng.uniform(size=(16, 2))
        labels = np.where(pts[:, 0] <= 0.5, 1, 2)
        ds = make_dataset(pts, labels)
        summary = select_all(ds, self._tree(),
                             SelectionParams(beta2=0.2, balanced=True))
        assert all(r.branch.startswith("balanced") for r in summary.per_cluster)
