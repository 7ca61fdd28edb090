import math
import random

import numpy as np
import pytest

from graphids.errors import GraphError
from graphids.services import metrics
from graphids.services.graph import WeightPolicy
from graphids.services.metrics import SENTINEL, UNSEEN, FeatureVector, MetricTable

from .conftest import graph_from, random_edges
from .oracles import Oracle

POLICIES = [WeightPolicy.UNWEIGHTED, WeightPolicy.WEIGHTED, WeightPolicy.MIXED]


def test_unseen_vector():
    assert UNSEEN.as_tuple() == (0.0, 0.0, 0.0, -10.0, -10.0, -10.0, 0.0, 0.0)
    assert tuple(FeatureVector.unseen()) == UNSEEN.as_tuple()


def test_extract_on_empty_graph_is_unseen():
    assert metrics.extract(graph_from([]), "10.0.0.1", WeightPolicy.UNWEIGHTED) == UNSEEN


def test_degrees_follow_policy():
    g = graph_from([("a", "b")] * 3 + [("c", "a")])

    assert metrics.degree(g, "a", WeightPolicy.UNWEIGHTED) == 2.0
    assert metrics.degree(g, "a", WeightPolicy.WEIGHTED) == 4.0
    assert metrics.degree(g, "a", WeightPolicy.MIXED, "out") == 3.0
    assert metrics.degree(g, "a", WeightPolicy.MIXED, "in") == 1.0


def test_closeness_of_sink_is_sentinel():
    g = graph_from([("a", "b")])
    assert metrics.closeness(g, "b", WeightPolicy.UNWEIGHTED) == SENTINEL
    assert metrics.closeness(g, "a", WeightPolicy.UNWEIGHTED) == 1.0


def test_closeness_uses_weights_only_when_weighted():
    g = graph_from([("a", "b")] * 2 + [("b", "c")])
    # a reaches b at 2 and c at 3
    assert metrics.closeness(g, "a", WeightPolicy.WEIGHTED) == pytest.approx(2 / 5)
    assert metrics.closeness(g, "a", WeightPolicy.MIXED) == pytest.approx(2 / 3)


def test_betweenness_of_chain_middle():
    g = graph_from([("a", "b"), ("b", "c")])
    # Only the pair (a, c) passes through b, scaled by (n-1)(n-2) = 2
    assert metrics.betweenness(g, "b", WeightPolicy.UNWEIGHTED) == pytest.approx(0.5)
    assert metrics.betweenness(g, "a", WeightPolicy.UNWEIGHTED) == 0.0


def test_betweenness_small_graphs_are_zero():
    g = graph_from([("a", "b")])
    assert metrics.betweenness_all(g, WeightPolicy.UNWEIGHTED) == {"a": 0.0, "b": 0.0}


def test_betweenness_independent_of_worker_count():
    rng = random.Random(7)
    # Enough nodes for several source chunks
    edges = [(f"n{rng.randrange(150)}", f"n{rng.randrange(150)}") for _ in range(600)]
    g = graph_from(edges)

    serial = metrics.betweenness_all(g, WeightPolicy.WEIGHTED, workers=1)
    parallel = metrics.betweenness_all(g, WeightPolicy.WEIGHTED, workers=2)
    assert serial == parallel


def test_clustering_counts_pairs_at_exact_distance():
    # b and c are linked, d only reachable through c
    g = graph_from([("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("c", "e"), ("e", "d")])
    assert metrics.clustering(g, "a", 1) == pytest.approx(1 / 3)
    assert metrics.clustering(g, "a", 2) == pytest.approx(1 / 3)


def test_clustering_ignores_paths_through_the_node():
    g = graph_from([("a", "b"), ("a", "c")])
    assert metrics.clustering(g, "a", 1) == 0.0
    assert metrics.clustering(g, "a", 2) == 0.0


def test_clustering_rejects_other_distances():
    with pytest.raises(ValueError):
        metrics.clustering(graph_from([("a", "b")]), "a", 3)


def test_unknown_node_raises_graph_error():
    g = graph_from([("a", "b")])
    with pytest.raises(GraphError):
        metrics.closeness(g, "z", WeightPolicy.UNWEIGHTED)
    with pytest.raises(KeyError):
        metrics.degree(g, "z", WeightPolicy.UNWEIGHTED)


def test_eigenvector_of_cycle_is_uniform():
    g = graph_from([("a", "b"), ("b", "c"), ("c", "a")])
    values = metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED)
    assert values == pytest.approx({"a": 1.0, "b": 1.0, "c": 1.0})


def test_eigenvector_of_two_cycle():
    g = graph_from([("a", "b"), ("b", "a")])
    assert metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED) == {"a": 1.0, "b": 1.0}


def test_eigenvector_single_edge_puts_weight_on_the_target():
    g = graph_from([("a", "b")])
    assert metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED) == {"a": 0.0, "b": 1.0}
    assert metrics.extract(g, "a", WeightPolicy.UNWEIGHTED).as_tuple() == (1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)


def test_eigenvector_on_client_server_traffic():
    g = graph_from([("c1", "s1"), ("c2", "s1"), ("c3", "s1"), ("c1", "s2"), ("c1", "s2")])

    unweighted = metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED)
    assert unweighted == pytest.approx({"c1": 0.0, "c2": 0.0, "c3": 0.0, "s1": 1.0, "s2": 1 / 3})
    # Repeated connections count as adjacency magnitude
    weighted = metrics.eigenvector_all(g, WeightPolicy.WEIGHTED)
    assert weighted["s2"] == pytest.approx(2 / 3)
    assert SENTINEL not in unweighted.values()


def test_eigenvector_matches_dominant_eigenvector():
    # Characteristic polynomial l^3 - l - 1
    g = graph_from([("a", "b"), ("a", "c"), ("b", "c"), ("c", "a")])
    rho = max(r.real for r in np.roots([1, 0, -1, -1]) if abs(r.imag) < 1e-12)

    values = metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED)
    assert values["c"] == 1.0
    assert values["a"] == pytest.approx(1 / rho, abs=1e-6)
    assert values["b"] == pytest.approx(1 / rho ** 2, abs=1e-6)


def test_eigenvector_oscillation_gives_sentinel():
    # Period-2 structure never settles from the all-ones start
    g = graph_from([("a", "b"), ("b", "a"), ("c", "a")])
    values = metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED)
    assert set(values.values()) == {SENTINEL}


def test_eigenvector_iteration_cap_gives_sentinel():
    g = graph_from([("a", "b"), ("a", "c"), ("b", "c"), ("c", "a")])
    values = metrics.eigenvector_all(g, WeightPolicy.UNWEIGHTED, max_iter=3)
    assert set(values.values()) == {SENTINEL}


def test_self_loops_do_not_enter_metrics():
    g = graph_from([("a", "a"), ("a", "b")])
    vec = metrics.extract(g, "a", WeightPolicy.WEIGHTED)
    assert vec.dc == 1.0
    assert vec.out_dc == 1.0


def test_metric_table_returns_unseen_for_absent_nodes():
    g = graph_from([("a", "b")])
    table = MetricTable.build(g, WeightPolicy.UNWEIGHTED, nodes=["a", "zz"])
    assert "a" in table
    assert table["zz"] == UNSEEN


def test_all_metrics_match_brute_force_oracles():
    rng = random.Random(2024)
    eigen_checked = 0
    for _ in range(200):
        _, edges = random_edges(rng)
        if not edges:
            continue
        g = graph_from(edges)
        for policy in POLICIES:
            oracle = Oracle(edges, policy.value)
            table = MetricTable.build(g, policy)
            for v in oracle.nodes:
                got = table[v].as_tuple()
                want = oracle.vector(v)
                # Degrees are exact integers
                assert got[:3] == want[:3], (policy, v, edges)
                for index in (3, 4, 6, 7):
                    name = metrics.FEATURE_NAMES[index]
                    assert math.isclose(got[index], want[index], abs_tol=1e-9), (name, policy, v, edges)

                if want[5] is None:
                    assert got[5] == SENTINEL or 0.0 <= got[5] <= 1.0, (policy, v, edges)
                else:
                    assert math.isclose(got[5], want[5], abs_tol=oracle.eigen_tolerance), (policy, v, edges)
                    eigen_checked += 1
    assert eigen_checked > 0


def test_policies_differ_only_where_weights_apply():
    rng = random.Random(11)
    for _ in range(50):
        _, edges = random_edges(rng)
        if not edges:
            continue
        g = graph_from(edges)
        tables = {policy: MetricTable.build(g, policy) for policy in POLICIES}
        for v in g.nodes:
            u = tables[WeightPolicy.UNWEIGHTED][v].as_tuple()
            w = tables[WeightPolicy.WEIGHTED][v].as_tuple()
            m = tables[WeightPolicy.MIXED][v].as_tuple()
            assert m[3:] == u[3:], (v, edges)
            assert m[:3] == w[:3], (v, edges)


def test_unweighted_metrics_ignore_repeated_connections():
    rng = random.Random(5)
    for _ in range(30):
        _, edges = random_edges(rng)
        once = sorted(set(edges))
        a = MetricTable.build(graph_from(edges), WeightPolicy.UNWEIGHTED)
        b = MetricTable.build(graph_from(once), WeightPolicy.UNWEIGHTED)
        assert a.vectors.keys() == b.vectors.keys()
        for v in a.vectors:
            assert a[v].as_tuple() == pytest.approx(b[v].as_tuple(), abs=1e-12), (v, edges)
