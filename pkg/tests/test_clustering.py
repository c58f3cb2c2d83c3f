import numpy as np
import pytest

from cmshift.clustering import (
    ClusteringResult,
    cut,
    load_clustering,
    save_clustering,
    semi_supervised_kmeans,
    ward_cluster,
)

COST_TOL = 1e-12


def naive_ward_oracle(points, steps=None):
    """O(n^3) agglomeration recomputing every pair cost from member lists.

    Costs come straight from the minimum-variance definition
    |A||B|/(|A|+|B|) * ||mean(A) - mean(B)||^2 rather than any recurrence,
    so the route is independent of the Lance-Williams implementation.
    Returns (merge records, final clusters as {id: member list}).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    clusters = {i: [i] for i in range(n)}
    merges = []
    steps = n - 1 if steps is None else steps
    for step in range(steps):
        best = None
        ids = sorted(clusters)
        costs = {}
        low = np.inf
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                ma = points[clusters[a]].mean(axis=0)
                mb = points[clusters[b]].mean(axis=0)
                na, nb = len(clusters[a]), len(clusters[b])
                cost = na * nb / (na + nb) * float(np.sum((ma - mb) ** 2))
                costs[(a, b)] = cost
                low = min(low, cost)
        ties = sorted(pair for pair, cost in costs.items() if cost <= low + COST_TOL)
        a, b = ties[0]
        new_id = n + step
        merges.append((a, b, costs[(a, b)], new_id))
        clusters[new_id] = clusters.pop(a) + clusters.pop(b)
    return merges, clusters


class TestWardCluster:
    def test_symmetric_quad(self):
        points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        history = ward_cluster(points)
        first_two = {(m.cluster_a, m.cluster_b) for m in history.merges[:2]}
        assert first_two == {(0, 1), (2, 3)}
        result = cut(history, 2)
        assert result.assignments[0] == result.assignments[1]
        assert result.assignments[2] == result.assignments[3]
        assert result.assignments[0] != result.assignments[2]

    def test_single_point(self):
        history = ward_cluster(np.array([[1.0, 2.0]]))
        assert history.n == 1 and history.merges == ()

    def test_merge_sequence_matches_naive_oracle(self):
        rng = np.random.default_rng(61)
        points = rng.standard_normal((48, 6))
        history = ward_cluster(points)
        expect, _ = naive_ward_oracle(points)
        assert len(history.merges) == len(expect)
        for got, (a, b, cost, new_id) in zip(history.merges, expect):
            assert (got.cluster_a, got.cluster_b, got.new_cluster) == (a, b, new_id)
            assert abs(got.cost - cost) < COST_TOL

    def test_costs_non_decreasing(self):
        rng = np.random.default_rng(62)
        for seed in range(5):
            points = np.random.default_rng(seed).standard_normal((30, 4))
            history = ward_cluster(points)
            costs = [m.cost for m in history.merges]
            assert all(b >= a - COST_TOL for a, b in zip(costs, costs[1:]))

    def test_non_finite_points_rejected(self):
        with pytest.raises(ValueError):
            ward_cluster(np.array([[0.0, np.inf]]))

    def test_permutation_invariance_up_to_relabeling(self):
        rng = np.random.default_rng(63)
        points = rng.standard_normal((40, 5))
        history = ward_cluster(points)
        perm = rng.permutation(40)
        permuted_history = ward_cluster(points[perm])
        for k in (2, 5, 11):
            base = cut(history, k).assignments
            permuted = cut(permuted_history, k).assignments
            groups_base = {frozenset(np.nonzero(base == c)[0].tolist()) for c in range(k)}
            groups_perm = {
                frozenset(perm[np.nonzero(permuted == c)[0]].tolist()) for c in range(k)
            }
            assert groups_base == groups_perm


class TestCut:
    def test_boundary_cuts(self):
        rng = np.random.default_rng(64)
        points = rng.standard_normal((12, 3))
        history = ward_cluster(points)
        singletons = cut(history, 12)
        assert np.array_equal(singletons.assignments, np.arange(12))
        single = cut(history, 1)
        assert np.all(single.assignments == 0)

    def test_all_cuts_have_exactly_k_clusters(self):
        points = np.random.default_rng(65).standard_normal((25, 4))
        history = ward_cluster(points)
        for k in range(1, 26):
            result = cut(history, k)
            assert np.unique(result.assignments).size == k

    def test_cut_equals_stop_early_oracle(self):
        points = np.random.default_rng(66).standard_normal((20, 3))
        history = ward_cluster(points)
        for k in (1, 3, 7, 20):
            _, clusters = naive_ward_oracle(points, steps=20 - k)
            expect = {frozenset(members) for members in clusters.values()}
            got_assign = cut(history, k).assignments
            got = {frozenset(np.nonzero(got_assign == c)[0].tolist()) for c in range(k)}
            assert got == expect

    def test_out_of_range_k(self):
        history = ward_cluster(np.random.default_rng(0).standard_normal((5, 2)))
        with pytest.raises(ValueError):
            cut(history, 0)
        with pytest.raises(ValueError):
            cut(history, 6)

    def test_relabeling_by_smallest_member(self):
        points = np.array([[0.0, 0.0], [5.0, 0.0], [0.1, 0.0], [5.1, 0.0]])
        result = cut(ward_cluster(points), 2)
        # item 0's cluster must be labeled 0, item 1's labeled 1
        assert result.assignments[0] == 0 and result.assignments[1] == 1


class TestSemiSupervisedKmeans:
    def test_all_labeled_pins_everything(self):
        rng = np.random.default_rng(70)
        points = rng.standard_normal((12, 3))
        labels = [(i, i % 3) for i in range(12)]
        result = semi_supervised_kmeans(points, labels, k=3, seed=1)
        assert result.assignments.tolist() == [i % 3 for i in range(12)]

    def test_unlabeled_k1_single_cluster(self):
        rng = np.random.default_rng(71)
        points = rng.standard_normal((9, 2))
        result = semi_supervised_kmeans(points, [], k=1, seed=2)
        assert np.all(result.assignments == 0)

    def test_two_separated_classes_one_labeled(self):
        rng = np.random.default_rng(72)
        a = rng.normal(0.0, 0.05, size=(20, 4)) + np.array([1.0, 0, 0, 0])
        b = rng.normal(0.0, 0.05, size=(20, 4)) + np.array([-1.0, 0, 0, 0])
        points = np.concatenate([a, b])
        labels = [(i, 0) for i in range(5)]  # a few labeled points of class a
        result = semi_supervised_kmeans(points, labels, k=2, seed=3)
        assert np.all(result.assignments[:20] == result.assignments[0])
        assert np.all(result.assignments[20:] == result.assignments[20])
        assert result.assignments[0] != result.assignments[20]

    def test_labeled_points_never_move(self):
        rng = np.random.default_rng(73)
        points = rng.standard_normal((30, 3))
        labels = [(0, 0), (1, 0), (2, 1), (3, 1)]
        result = semi_supervised_kmeans(points, labels, k=4, seed=4)
        assert result.assignments[0] == result.assignments[1] == 0
        assert result.assignments[2] == result.assignments[3] == 1

    def test_k_below_class_count_rejected(self):
        points = np.zeros((4, 2))
        with pytest.raises(ValueError):
            semi_supervised_kmeans(points, [(0, 0), (1, 1), (2, 2)], k=2)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 1, 1, 0, 2]),
            k=3,
            item_indices=np.array([3, 4, 7, 9, 11]),
        )
        path = tmp_path / "assign.csv"
        save_clustering(result, path)
        loaded = load_clustering(path)
        assert np.array_equal(loaded.assignments, result.assignments)
        assert np.array_equal(loaded.item_indices, result.item_indices)
        assert loaded.k == 3
