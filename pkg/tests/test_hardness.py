import itertools

import numpy as np
import pytest

from fairclust.core import PointSet, SoftClustering, build_distance_matrix, hard_cost
from fairclust.core import triangle_violation
from fairclust.hardness import (
    Graph,
    check_witness,
    domset_bruteforce,
    domset_to_metric,
    fair_radius_one_exists,
    fair_side,
    half_mass_witness,
    radius_one_solution,
    round_support_nearest,
    unit_or_far_metric,
    verify_reduction,
)

from oracles import dominating_bitmask

K3 = Graph.complete(3)
PATH_PLUS_ISOLATED = Graph(3, frozenset({(0, 1)}))


def random_graphs(count, max_n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        yield Graph.random(n, float(rng.uniform(0.15, 0.7)), rng)


class TestGraph:
    def test_validation(self):
        with pytest.raises(ValueError):
            Graph(3, frozenset({(1, 1)}))
        with pytest.raises(ValueError):
            Graph(3, frozenset({(0, 3)}))

    def test_text_round_trip(self):
        g = Graph(5, frozenset({(0, 1), (3, 1), (2, 4)}))
        assert Graph.from_text(g.to_text()) == g
        assert g.to_text().splitlines()[0] == "5"

    def test_read_file(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("4\n0 1\n# comment\n2 3\n")
        assert Graph.read(path).edges == frozenset({(0, 1), (2, 3)})


class TestRounding:
    def test_point_masses_unchanged(self):
        dm = build_distance_matrix(PointSet(np.random.default_rng(0).normal(size=(6, 2))))
        mu = np.zeros((6, 2))
        mu[[0, 2, 4], 0] = 1.0
        mu[[1, 3, 5], 1] = 1.0
        hc = round_support_nearest(SoftClustering((2, 3), mu), dm)
        assert list(hc.assign) == [2, 3, 2, 3, 2, 3]

    def test_half_half(self):
        dm = build_distance_matrix(PointSet(np.array([[0.0], [1.0], [-3.0]])))
        sc = SoftClustering((1, 2), np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]))
        hc = round_support_nearest(sc, dm)
        assert hc.assign[0] == 1
        assert dm.d[0, 1] <= sc.expected_distances(dm)[0]

    def test_ties_to_lowest_id(self):
        dm = build_distance_matrix(PointSet(np.array([[0.0], [1.0], [-1.0]])))
        sc = SoftClustering((2, 1), np.full((3, 2), 0.5))
        assert round_support_nearest(sc, dm).assign[0] == 1

    def test_random_soft_solutions(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(3, 12))
            k = int(rng.integers(1, min(n, 4) + 1))
            dm = build_distance_matrix(PointSet(rng.normal(size=(n, 2))))
            centers = tuple(int(c) for c in rng.choice(n, k, replace=False))
            mu = rng.dirichlet(np.full(k, 0.5), size=n)
            mu[mu < 0.05] = 0.0
            mu /= mu.sum(axis=1, keepdims=True)
            sc = SoftClustering(centers, mu)
            hc = round_support_nearest(sc, dm)
            expected = sc.expected_distances(dm)
            per_point = dm.d[np.arange(n), hc.assign]
            assert np.all(per_point <= expected + 1e-12)
            assert hard_cost(hc, dm, np.inf) <= expected.max() + 1e-12


class TestMetric:
    def test_triangle_graph(self):
        d = domset_to_metric(K3).d
        assert np.all(d[~np.eye(3, dtype=bool)] == 1.0)

    def test_path_and_isolated(self):
        d = domset_to_metric(PATH_PLUS_ISOLATED).d
        assert d[0, 1] == 1.0 and d[0, 2] == 2.0 and d[1, 2] == 2.0

    def test_triangle_inequality_all_triples(self):
        for g in random_graphs(20, 8, 1):
            d = domset_to_metric(g).d
            n = g.n
            for i, j, k in itertools.product(range(n), repeat=3):
                assert d[i, k] <= d[i, j] + d[j, k]
            assert triangle_violation(d) == 0.0


class TestDomset:
    def test_examples(self):
        assert domset_bruteforce(K3, 1)
        assert not domset_bruteforce(PATH_PLUS_ISOLATED, 1)
        assert domset_bruteforce(PATH_PLUS_ISOLATED, 2)

    def test_guard(self):
        with pytest.raises(ValueError):
            domset_bruteforce(Graph(17, frozenset()), 2)
        with pytest.raises(ValueError):
            verify_reduction(Graph(11, frozenset()), 2)

    def test_against_bitmask(self):
        rng = np.random.default_rng(5)
        for g in random_graphs(50, 8, 2):
            k = int(rng.integers(1, 4))
            assert domset_bruteforce(g, k) == dominating_bitmask(g.n, g.edges, k)


class TestReduction:
    def test_k3(self):
        assert domset_bruteforce(K3, 1) and fair_side(K3, 1)
        assert verify_reduction(K3, 1)

    def test_path_plus_isolated(self):
        assert not domset_bruteforce(PATH_PLUS_ISOLATED, 1) and not fair_side(PATH_PLUS_ISOLATED, 1)
        assert verify_reduction(PATH_PLUS_ISOLATED, 1)

    def test_sweep(self):
        rng = np.random.default_rng(6)
        for g in random_graphs(30, 7, 3):
            assert verify_reduction(g, int(rng.integers(1, 4)))

    def test_witness(self):
        for g in list(random_graphs(25, 8, 4)) + [Graph.star(6), Graph.path(6), K3]:
            for k in (1, 2, 3):
                hc = radius_one_solution(g, k)
                if hc is None:
                    continue
                dm = domset_to_metric(g)
                assert hard_cost(hc, dm, np.inf) <= 1.0
                for c_hat in hc.centers:
                    fair, worst = check_witness(half_mass_witness(hc, c_hat), dm)
                    assert fair and worst < 2.0


class TestUnitOrFar:
    def test_not_a_metric_in_general(self):
        g = Graph.path(3)
        assert triangle_violation(unit_or_far_metric(g).d) > 0

    def test_iff_vanilla(self):
        rng = np.random.default_rng(9)
        for g in random_graphs(20, 7, 7):
            k = int(rng.integers(1, 4))
            assert fair_radius_one_exists(g, k) == dominating_bitmask(g.n, g.edges, k)
