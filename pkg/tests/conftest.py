import random
from typing import Optional, Sequence, Tuple

import pandas as pd
import pytest

from graphids import create_app
from graphids.services.graph import TrafficGraph
from graphids.services.ingest import ConnectionDataset
from graphids.services.synthetic import scanner_corpus


@pytest.fixture
def app():
    app = create_app("testing")
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


def make_dataset(pairs: Sequence[Tuple[str, str]], labels: Optional[Sequence[str]] = None,
                 start: str = "2017-07-03 09:00:00") -> ConnectionDataset:
    """Connections one second apart, benign unless labels say otherwise"""
    labels = list(labels) if labels is not None else ["Benign"] * len(pairs)
    frame = pd.DataFrame({
        "src": [s for s, _ in pairs],
        "dst": [d for _, d in pairs],
        "ts": pd.Timestamp(start) + pd.to_timedelta(range(len(pairs)), unit="s"),
        "label": labels,
    })
    return ConnectionDataset(frame)


def random_edges(rng: random.Random, max_nodes: int = 12, max_weight: int = 5):
    """Random directed multigraph as an insertion list, self-loops included now and then"""
    n = rng.randint(1, max_nodes)
    nodes = [f"10.0.0.{i + 1}" for i in range(n)]
    edges = []
    for _ in range(rng.randint(0, 3 * n)):
        u, v = rng.choice(nodes), rng.choice(nodes)
        edges.extend([(u, v)] * rng.randint(1, max_weight))
    rng.shuffle(edges)
    return nodes, edges


def graph_from(edges) -> TrafficGraph:
    g = TrafficGraph()
    for u, v in edges:
        g.update(u, v)
    return g


@pytest.fixture(scope="session")
def corpus():
    return scanner_corpus(seed=42)


@pytest.fixture
def tiny_dataset():
    return make_dataset([
        ("10.0.0.1", "10.0.0.2"),
        ("10.0.0.2", "10.0.0.3"),
        ("10.0.0.1", "10.0.0.3"),
        ("10.0.0.4", "10.0.0.1"),
        ("10.0.0.1", "10.0.0.2"),
    ], labels=["Benign", "Benign", "PortScan", "Benign", "PortScan"])
