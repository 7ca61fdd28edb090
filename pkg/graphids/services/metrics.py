# graphids/services/metrics.py - Node metrics of a frozen traffic-graph snapshot
"""Eight per-node metrics assembled into a FeatureVector.

Order: degree, in-degree, out-degree, closeness, betweenness, eigenvector,
clustering at distance 1, clustering at distance 2. Values that would be
infinite or undefined are replaced by the SENTINEL (-10).
"""
from dataclasses import astuple, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence, Set, Union

import networkx as nx
import numpy as np
from joblib import Parallel, delayed

from ..errors import GraphError
from ..extensions import logger
from .graph import TrafficGraph, WeightPolicy

SENTINEL = -10.0
FEATURE_NAMES = ("dc", "in_dc", "out_dc", "closeness", "betweenness", "eigenvector", "cc1", "cc2")
DEGREE_FEATURES = ("dc", "in_dc", "out_dc")

# Sources per Brandes chunk; fixed so sums do not depend on the worker count
BETWEENNESS_CHUNK = 64

GraphLike = Union[TrafficGraph, nx.DiGraph]


@dataclass(frozen=True)
class FeatureVector:
    dc: float
    in_dc: float
    out_dc: float
    closeness: float
    betweenness: float
    eigenvector: float
    cc1: float
    cc2: float

    @classmethod
    def unseen(cls) -> "FeatureVector":
        return cls(0.0, 0.0, 0.0, SENTINEL, SENTINEL, SENTINEL, 0.0, 0.0)

    def as_tuple(self) -> tuple:
        return astuple(self)

    def __iter__(self):
        return iter(astuple(self))


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES

UNSEEN = FeatureVector.unseen()


def _snapshot(g: GraphLike) -> nx.DiGraph:
    return g.snapshot() if isinstance(g, TrafficGraph) else g


def _require(g: nx.DiGraph, v: str):
    if v not in g:
        raise GraphError(f"node {v!r} is not in the graph", node=v)


def degree(g: GraphLike, v: str, policy: WeightPolicy, direction: str = "both") -> float:
    g = _snapshot(g)
    _require(g, v)
    weight = WeightPolicy.parse(policy).degree_weight

    if direction == "in":
        return float(g.in_degree(v, weight=weight))
    if direction == "out":
        return float(g.out_degree(v, weight=weight))
    if direction == "both":
        return float(g.in_degree(v, weight=weight) + g.out_degree(v, weight=weight))
    raise ValueError(f"direction must be in, out or both, not {direction!r}")


def closeness(g: GraphLike, v: str, policy: WeightPolicy) -> float:
    """Out-distance closeness with Wasserman-Faust scaling; -10 when nothing is reachable"""
    g = _snapshot(g)
    _require(g, v)
    n = g.number_of_nodes()
    if n <= 1:
        return SENTINEL

    weight = WeightPolicy.parse(policy).path_weight
    if weight:
        dist = nx.single_source_dijkstra_path_length(g, v, weight=weight)
    else:
        dist = nx.single_source_shortest_path_length(g, v)

    reachable = len(dist) - 1
    if reachable == 0:
        return SENTINEL
    total = sum(dist.values())
    return (reachable / total) * (reachable / (n - 1))


def _betweenness_chunk(g: nx.DiGraph, sources: Sequence[str], weight: Optional[str]) -> Dict[str, float]:
    return nx.betweenness_centrality_subset(g, sources=sources, targets=list(g), normalized=False, weight=weight)


def betweenness_all(g: GraphLike, policy: WeightPolicy, workers: int = 1) -> Dict[str, float]:
    """Normalised directed betweenness for every node"""
    g = _snapshot(g)
    n = g.number_of_nodes()
    result = dict.fromkeys(g, 0.0)
    if n < 3:
        return result

    weight = WeightPolicy.parse(policy).path_weight
    ordered = sorted(g)
    chunks = [ordered[i:i + BETWEENNESS_CHUNK] for i in range(0, n, BETWEENNESS_CHUNK)]

    if workers > 1 and len(chunks) > 1:
        partials = Parallel(n_jobs=workers)(delayed(_betweenness_chunk)(g, chunk, weight) for chunk in chunks)
    else:
        partials = [_betweenness_chunk(g, chunk, weight) for chunk in chunks]

    # Reduce in chunk order
    for partial in partials:
        for node, value in partial.items():
            result[node] += value

    scale = 1.0 / ((n - 1) * (n - 2))
    return {node: value * scale for node, value in result.items()}


def betweenness(g: GraphLike, v: str, policy: WeightPolicy) -> float:
    g = _snapshot(g)
    _require(g, v)
    return betweenness_all(g, policy)[v]


def eigenvector_all(g: GraphLike, policy: WeightPolicy, tol: float = 1e-8,
                    max_iter: int = 1000) -> Dict[str, float]:
    """Max-normalised power iteration of x <- A^T x from the all-ones vector.

    On an acyclic graph the iterates reach zero after at most n steps; the
    last non-zero iterate is returned then. Every node gets SENTINEL when
    the iteration cap is hit first (oscillation on periodic graphs).
    """
    g = _snapshot(g)
    nodes = sorted(g)
    if not nodes:
        return {}

    weight = WeightPolicy.parse(policy).path_weight
    adjacency = nx.to_scipy_sparse_array(g, nodelist=nodes, weight=weight, dtype=float, format="csr")
    incoming = adjacency.T.tocsr()

    x = np.ones(len(nodes))
    for iteration in range(1, max_iter + 1):
        nxt = incoming @ x
        top = nxt.max()
        # Entries are non-negative, so zero here is exact
        if top <= 0.0:
            logger.debug(f"Eigenvector iteration vanished after {iteration} steps (acyclic graph)")
            return dict(zip(nodes, x.tolist()))
        nxt /= top
        delta = np.abs(nxt - x).max()
        x = nxt
        if delta < tol:
            logger.debug(f"Eigenvector iteration converged after {iteration} steps")
            return dict(zip(nodes, x.tolist()))

    logger.debug(f"Eigenvector iteration did not converge in {max_iter} steps on {len(nodes)} nodes")
    return dict.fromkeys(nodes, SENTINEL)


def eigenvector(g: GraphLike, v: str, policy: WeightPolicy) -> float:
    g = _snapshot(g)
    _require(g, v)
    return eigenvector_all(g, policy)[v]


def undirected_neighbors(g: nx.DiGraph) -> Dict[str, Set[str]]:
    return {v: set(g.successors(v)) | set(g.predecessors(v)) for v in g}


def _clustering_from(neighbors: Dict[str, Set[str]], v: str, d: int) -> float:
    nb = neighbors[v]
    k = len(nb)
    if k < 2:
        return 0.0

    # Ordered pairs, so every unordered pair is counted twice
    hits = 0
    for u in nb:
        # Distances are measured with v deleted
        near_u = neighbors[u] - {v}
        if d == 1:
            hits += len(near_u & nb)
        else:
            reach = set().union(*(neighbors[x] for x in near_u)) - {u, v}
            hits += len((reach - near_u) & nb)
    return hits / (k * (k - 1))


def clustering(g: GraphLike, v: str, d: int = 1) -> float:
    """Share of neighbour pairs at distance exactly d in the v-deleted undirected projection"""
    if d not in (1, 2):
        raise ValueError(f"clustering distance must be 1 or 2, not {d}")
    g = _snapshot(g)
    _require(g, v)
    return _clustering_from(undirected_neighbors(g), v, d)


def extract(g: GraphLike, v: str, policy: WeightPolicy) -> FeatureVector:
    """All eight metrics for one node; unseen nodes get the all-unseen vector"""
    g = _snapshot(g)
    if v not in g:
        return UNSEEN
    return MetricTable.build(g, policy, nodes=[v])[v]


class MetricTable:
    """Per-snapshot metric cache.

    Betweenness and eigenvector are whole-graph computations done once;
    the per-node metrics are computed for the requested nodes only.
    """

    def __init__(self, vectors: Dict[str, FeatureVector]):
        self.vectors = vectors

    @classmethod
    def build(cls, g: GraphLike, policy: WeightPolicy, nodes: Optional[Iterable[str]] = None,
              workers: int = 1, eigen_tol: float = 1e-8, eigen_max_iter: int = 1000) -> "MetricTable":
        g = _snapshot(g)
        policy = WeightPolicy.parse(policy)
        wanted: List[str] = sorted(set(g) if nodes is None else {v for v in nodes if v in g})
        if not wanted:
            return cls({})

        between = betweenness_all(g, policy, workers=workers)
        eigen = eigenvector_all(g, policy, tol=eigen_tol, max_iter=eigen_max_iter)
        neighbors = undirected_neighbors(g)

        vectors = {}
        for v in wanted:
            in_dc = degree(g, v, policy, "in")
            out_dc = degree(g, v, policy, "out")
            vectors[v] = FeatureVector(
                dc=in_dc + out_dc,
                in_dc=in_dc,
                out_dc=out_dc,
                closeness=closeness(g, v, policy),
                betweenness=between[v],
                eigenvector=eigen[v],
                cc1=_clustering_from(neighbors, v, 1),
                cc2=_clustering_from(neighbors, v, 2),
            )
        return cls(vectors)

    def __getitem__(self, v: str) -> FeatureVector:
        return self.vectors.get(v, UNSEEN)

    def get(self, v: str) -> FeatureVector:
        return self[v]

    def __contains__(self, v: str) -> bool:
        return v in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


__all__ = [
    "SENTINEL",
    "FEATURE_NAMES",
    "DEGREE_FEATURES",
    "FeatureVector",
    "UNSEEN",
    "degree",
    "closeness",
    "betweenness",
    "betweenness_all",
    "eigenvector",
    "eigenvector_all",
    "clustering",
    "undirected_neighbors",
    "extract",
    "MetricTable",
]
