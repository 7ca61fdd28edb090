# graphids/services/graph.py - Oriented traffic graph populated one connection at a time
import io
import os
from enum import Enum
from typing import IO, Dict, Iterable, Optional, Tuple, Union

import networkx as nx
from networkx.classes.graphviews import generic_graph_view

from ..errors import GraphError
from ..extensions import logger


class WeightPolicy(str, Enum):
    """How stored edge weights enter the metrics"""

    UNWEIGHTED = "unweighted"
    WEIGHTED = "weighted"
    # Weights only for the degree family
    MIXED = "mixed"

    @classmethod
    def parse(cls, value: Union[str, "WeightPolicy"]) -> "WeightPolicy":
        if isinstance(value, WeightPolicy):
            return value
        aliases = {"u": cls.UNWEIGHTED, "w": cls.WEIGHTED, "m": cls.MIXED}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown weight policy '{value}' (expected unweighted, weighted or mixed)")

    @property
    def degree_weight(self) -> Optional[str]:
        return None if self is WeightPolicy.UNWEIGHTED else "weight"

    @property
    def path_weight(self) -> Optional[str]:
        return "weight" if self is WeightPolicy.WEIGHTED else None

    @property
    def short(self) -> str:
        return self.value[0]


class TrafficGraph:
    """Directed graph keyed by IP string with an integer counter per edge.

    Weights are always stored; the weight policy is applied when metrics
    are computed. Self-loop counts live beside the networkx graph, which
    therefore never holds a loop and can be handed out as a view.
    """

    def __init__(self):
        self._g = nx.DiGraph()
        self._loops: Dict[str, int] = {}
        self.insertions = 0

    def update(self, src: str, dst: str) -> "TrafficGraph":
        src, dst = str(src).strip(), str(dst).strip()
        if not src or not dst:
            raise GraphError("edge endpoints must be non-empty", src=src, dst=dst)

        if src == dst:
            self._g.add_node(src)
            self._loops[src] = self._loops.get(src, 0) + 1
        elif self._g.has_edge(src, dst):
            self._g[src][dst]["weight"] += 1
        else:
            self._g.add_edge(src, dst, weight=1)
        self.insertions += 1
        return self

    @property
    def nodes(self) -> frozenset:
        return frozenset(self._g.nodes)

    @property
    def edges(self) -> Dict[Tuple[str, str], int]:
        edges = {(u, v): w for u, v, w in self._g.edges(data="weight")}
        edges.update({(v, v): w for v, w in self._loops.items()})
        return edges

    def weight(self, src: str, dst: str) -> int:
        if src == dst:
            return self._loops.get(src, 0)
        data = self._g.get_edge_data(src, dst)
        return data["weight"] if data else 0

    def has_node(self, node: str) -> bool:
        return node in self._g

    def number_of_nodes(self) -> int:
        return self._g.number_of_nodes()

    def number_of_edges(self) -> int:
        return self._g.number_of_edges() + len(self._loops)

    def snapshot(self) -> nx.DiGraph:
        """Read-only view of the current graph, without self-loops.

        Nothing is copied: the view follows later updates, so metrics for a
        block must be computed before the next connection is inserted.
        """
        return nx.freeze(generic_graph_view(self._g))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrafficGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self) -> str:
        return f"TrafficGraph(|V|={self.number_of_nodes()}, |E|={self.number_of_edges()})"


def update(g: TrafficGraph, src: str, dst: str) -> TrafficGraph:
    return g.update(src, dst)


def populate_edges(edges: Iterable[Tuple[str, str]]) -> TrafficGraph:
    g = TrafficGraph()
    for src, dst in edges:
        g.update(src, dst)
    return g


def populate(d, upto: int) -> TrafficGraph:
    """G_upto: fold of update over connections 0..upto (upto = -1 is the empty graph)"""
    n = len(d)
    if upto < -1 or upto >= n:
        raise GraphError(f"populate index {upto} outside [-1, {n - 1}]", upto=upto, n=n)

    src, dst = d.src, d.dst
    g = populate_edges(zip(src[: upto + 1], dst[: upto + 1]))
    logger.debug(f"Populated {g!r} from {upto + 1} connections")
    return g


def write_edge_list(g: TrafficGraph, sink: Union[IO[str], IO[bytes], str, os.PathLike]):
    """Debug export: src,dst,weight per line, sorted"""
    lines = [f"{u},{v},{w}\n" for (u, v), w in sorted(g.edges.items())]
    text = "".join(lines)

    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


__all__ = ["WeightPolicy", "TrafficGraph", "update", "populate", "populate_edges", "write_edge_list"]
