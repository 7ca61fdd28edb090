import io

import networkx as nx
import pytest

from graphids.errors import GraphError
from graphids.services.graph import TrafficGraph, WeightPolicy, populate, update, write_edge_list

from .conftest import graph_from, make_dataset


def test_update_counts_repeated_edges():
    g = TrafficGraph()
    update(g, "10.0.0.1", "10.0.0.2")
    update(g, "10.0.0.1", "10.0.0.2")
    update(g, "10.0.0.2", "10.0.0.1")

    assert g.nodes == {"10.0.0.1", "10.0.0.2"}
    assert g.edges == {("10.0.0.1", "10.0.0.2"): 2, ("10.0.0.2", "10.0.0.1"): 1}
    assert g.weight("10.0.0.1", "10.0.0.2") == 2
    assert g.weight("10.0.0.2", "10.0.0.3") == 0


def test_update_rejects_empty_endpoint():
    with pytest.raises(GraphError):
        TrafficGraph().update("", "10.0.0.1")


def test_snapshot_is_frozen_and_drops_self_loops():
    g = graph_from([("a", "a"), ("a", "b")])
    snap = g.snapshot()

    assert set(snap.nodes) == {"a", "b"}
    assert list(snap.edges) == [("a", "b")]
    assert nx.is_frozen(snap)
    with pytest.raises(nx.NetworkXError):
        snap.add_edge("b", "c")
    # The live graph keeps the self-loop weight
    assert g.weight("a", "a") == 1
    assert g.edges == {("a", "a"): 1, ("a", "b"): 1}
    assert g.number_of_edges() == 2


def test_snapshot_is_a_view_not_a_copy():
    g = graph_from([("a", "b")])
    snap = g.snapshot()
    g.update("a", "b")
    g.update("b", "c")

    assert snap["a"]["b"]["weight"] == 2
    assert set(snap.nodes) == {"a", "b", "c"}
    assert g.number_of_edges() == 2


def test_node_seen_only_in_a_self_loop_is_a_node():
    g = graph_from([("a", "a")])
    assert g.nodes == {"a"}
    assert list(g.snapshot().nodes) == ["a"]
    assert list(g.snapshot().edges) == []


def test_populate_prefixes():
    d = make_dataset([("a", "b"), ("b", "c"), ("a", "b")])
    assert populate(d, -1) == TrafficGraph()
    assert populate(d, 0).edges == {("a", "b"): 1}
    assert populate(d, 2).edges == {("a", "b"): 2, ("b", "c"): 1}


def test_populate_out_of_range():
    d = make_dataset([("a", "b")])
    with pytest.raises(GraphError):
        populate(d, 1)
    with pytest.raises(GraphError):
        populate(d, -2)


def test_populate_is_insertion_order_independent_on_final_graph():
    pairs = [("a", "b"), ("c", "a"), ("a", "b"), ("b", "c")]
    assert populate(make_dataset(pairs), 3) == populate(make_dataset(list(reversed(pairs))), 3)


def test_write_edge_list_sorted():
    g = graph_from([("b", "a"), ("a", "c"), ("a", "c")])
    sink = io.StringIO()
    write_edge_list(g, sink)
    assert sink.getvalue() == "a,c,2\nb,a,1\n"


@pytest.mark.parametrize("text,policy", [
    ("u", WeightPolicy.UNWEIGHTED),
    ("Weighted", WeightPolicy.WEIGHTED),
    ("m", WeightPolicy.MIXED),
])
def test_weight_policy_parse(text, policy):
    assert WeightPolicy.parse(text) is policy


def test_weight_policy_parse_rejects_unknown():
    with pytest.raises(ValueError):
        WeightPolicy.parse("cubic")


def test_weight_policy_attributes():
    assert WeightPolicy.UNWEIGHTED.degree_weight is None
    assert WeightPolicy.MIXED.degree_weight == "weight"
    assert WeightPolicy.MIXED.path_weight is None
    assert WeightPolicy.WEIGHTED.path_weight == "weight"
