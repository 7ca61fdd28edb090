# graphids/services/synthetic.py - Seeded scanner-vs-benign demo corpus
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..extensions import logger
from .ingest import ConnectionDataset

START = pd.Timestamp("2017-07-03 08:00:00")
SCANNER = "10.66.6.6"
ATTACK_LABEL = "PortScan"


@dataclass(frozen=True)
class SyntheticCorpus:
    dataset: ConnectionDataset
    boundary: pd.Timestamp


def scanner_corpus(seed: int = 42, n_benign: int = 2000, n_malicious: int = 200,
                   n_clients: int = 120, n_servers: int = 40, benign_label: str = "Benign") -> SyntheticCorpus:
    """Sparse random client->server traffic with one scanner fanning out to fresh hosts.

    Records are interleaved at random and spaced one second apart; the
    boundary sits at the middle record so both halves hold both classes.
    """
    rng = np.random.default_rng(seed)

    clients = [f"192.168.{i // 250}.{i % 250 + 1}" for i in range(n_clients)]
    servers = [f"10.0.{i // 250}.{i % 250 + 1}" for i in range(n_servers)]
    benign_src = rng.choice(clients, size=n_benign)
    benign_dst = rng.choice(servers, size=n_benign)

    # Every scan hits a host nobody else talks to
    targets = [f"172.16.{i // 250}.{i % 250 + 1}" for i in range(n_malicious)]
    src = np.concatenate([benign_src, np.full(n_malicious, SCANNER)])
    dst = np.concatenate([benign_dst, np.array(targets, dtype=object)])
    labels = np.array([benign_label] * n_benign + [ATTACK_LABEL] * n_malicious, dtype=object)

    order = rng.permutation(n_benign + n_malicious)
    total = order.size
    frame = pd.DataFrame({
        "src": src[order].astype(str),
        "dst": dst[order].astype(str),
        "ts": START + pd.to_timedelta(np.arange(total), unit="s"),
        "label": labels[order],
        "Flow Duration": rng.integers(1, 120_000_000, size=total),
        "Total Fwd Packets": rng.integers(1, 64, size=total),
    })
    frame[["Flow Duration", "Total Fwd Packets"]] = frame[["Flow Duration", "Total Fwd Packets"]].astype(str)

    dataset = ConnectionDataset(frame, ("Flow Duration", "Total Fwd Packets"), benign_label)
    boundary = frame["ts"].iloc[total // 2]
    logger.info(f"✅ Synthesized {n_benign} benign and {n_malicious} scanner connections (seed {seed})")
    return SyntheticCorpus(dataset, boundary)


__all__ = ["SyntheticCorpus", "scanner_corpus", "SCANNER", "ATTACK_LABEL"]
