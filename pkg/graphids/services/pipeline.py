# graphids/services/pipeline.py - Block schedule and derived dataset (D*) generation
import io
import os
from dataclasses import dataclass
from itertools import groupby
from typing import IO, Iterator, List, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import DerivedFormatError, ScheduleError
from ..extensions import logger
from .graph import TrafficGraph, WeightPolicy
from .ingest import ConnectionDataset, is_benign
from .metrics import FEATURE_NAMES, FeatureVector, MetricTable

FEATURE_COLUMNS = tuple(f"src_{name}" for name in FEATURE_NAMES) + tuple(f"dst_{name}" for name in FEATURE_NAMES)
DERIVED_COLUMNS = ("src", "dst", "label") + FEATURE_COLUMNS
FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class BlockSchedule:
    sigma: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ScheduleError("block schedule needs at least one connection", n=self.n)
        if not 1 <= self.sigma <= self.n:
            raise ScheduleError(f"sigma must lie in [1, {self.n}], got {self.sigma}", sigma=self.sigma)

    @classmethod
    def parse(cls, value: Union[str, int], n: int) -> "BlockSchedule":
        """Integer block size or the symbol N (whole dataset)"""
        if isinstance(value, str) and value.strip().upper() == "N":
            return cls(n, n)
        try:
            sigma = int(value)
        except (TypeError, ValueError):
            raise ScheduleError(f"sigma must be a positive integer or N, got {value!r}")
        return cls(min(sigma, n) if sigma >= 1 else sigma, n)

    @property
    def n_blocks(self) -> int:
        return -(-self.n // self.sigma)

    @property
    def label(self) -> str:
        return "N" if self.sigma == self.n else str(self.sigma)

    def block_index(self, i: int) -> int:
        return block_index(i, self)


def block_index(i: int, schedule: BlockSchedule) -> int:
    """Index of the graph snapshot whose metrics describe connection i"""
    sigma, n = schedule.sigma, schedule.n
    if not 0 <= i < n:
        raise ScheduleError(f"connection index {i} outside [0, {n - 1}]", index=i)

    # One snapshot after all traffic
    if sigma == n:
        return n - 1

    block = -(-i // sigma)
    if block < schedule.n_blocks:
        return sigma * block - 1
    return n - 1


@dataclass(frozen=True)
class DerivedRecord:
    src: str
    dst: str
    label: str
    f_src: FeatureVector
    f_dst: FeatureVector


class DerivedDataset:
    """D*: endpoints, label and the 16 graph features of each connection"""

    def __init__(self, frame: pd.DataFrame):
        if tuple(frame.columns) != DERIVED_COLUMNS:
            raise DerivedFormatError(f"derived columns must be {', '.join(DERIVED_COLUMNS)}")
        self._frame = frame

    @classmethod
    def from_records(cls, records: Sequence[DerivedRecord], index=None) -> "DerivedDataset":
        rows = [(r.src, r.dst, r.label) + r.f_src.as_tuple() + r.f_dst.as_tuple() for r in records]
        frame = pd.DataFrame(rows, columns=list(DERIVED_COLUMNS), index=index)
        frame[list(FEATURE_COLUMNS)] = frame[list(FEATURE_COLUMNS)].astype(float)
        return cls(frame)

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def labels(self) -> np.ndarray:
        return self._frame["label"].to_numpy()

    def features(self, names: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
        return self._frame[list(names)].to_numpy(dtype=float)

    def is_malicious(self, benign_label: str = "Benign") -> np.ndarray:
        return ~self._frame["label"].map(lambda label: is_benign(label, benign_label)).to_numpy(dtype=bool)

    def targets(self, benign_label: str = "Benign") -> np.ndarray:
        """Benign -1, any attack +1"""
        return np.where(self.is_malicious(benign_label), 1, -1)

    def take(self, positions: Sequence[int]) -> "DerivedDataset":
        return DerivedDataset(self._frame.loc[list(positions)])

    def records(self) -> Iterator[DerivedRecord]:
        width = len(FEATURE_NAMES)
        for row in self._frame.itertuples(index=False):
            values = tuple(float(v) for v in row[3:])
            yield DerivedRecord(row[0], row[1], row[2],
                                FeatureVector(*values[:width]), FeatureVector(*values[width:]))

    def __len__(self) -> int:
        return len(self._frame)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DerivedDataset):
            return NotImplemented
        return self._frame.reset_index(drop=True).equals(other._frame.reset_index(drop=True))

    def __repr__(self) -> str:
        return f"DerivedDataset(N={len(self)})"


def generate(d: ConnectionDataset, schedule: BlockSchedule, policy: WeightPolicy, workers: int = 1,
             eigen_tol: float = 1e-8, eigen_max_iter: int = 1000) -> DerivedDataset:
    """Populate the graph block by block and attach Φ of both endpoints to every connection"""
    n = len(d)
    if n == 0:
        raise ScheduleError("cannot generate features for an empty dataset")
    if schedule.n != n:
        raise ScheduleError(f"schedule built for {schedule.n} connections, dataset has {n}")

    policy = WeightPolicy.parse(policy)
    src, dst, labels = d.src, d.dst, d.labels
    phis = [block_index(i, schedule) for i in range(n)]

    graph = TrafficGraph()
    inserted = -1
    rows: List[tuple] = []
    snapshots = 0

    # φ is non-decreasing, so each group is one block sharing one snapshot
    for phi, members in groupby(range(n), key=phis.__getitem__):
        members = list(members)
        while inserted < phi:
            inserted += 1
            graph.update(src[inserted], dst[inserted])

        nodes = {src[i] for i in members} | {dst[i] for i in members}
        table = MetricTable.build(graph.snapshot(), policy, nodes=nodes, workers=workers,
                                  eigen_tol=eigen_tol, eigen_max_iter=eigen_max_iter)
        for i in members:
            rows.append((src[i], dst[i], labels[i]) + table[src[i]].as_tuple() + table[dst[i]].as_tuple())

        snapshots += 1
        if snapshots % 1000 == 0:
            logger.info(f"Extracted features for {len(rows)}/{n} connections ({snapshots} snapshots)")

    frame = pd.DataFrame(rows, columns=list(DERIVED_COLUMNS), index=d.positions)
    frame[list(FEATURE_COLUMNS)] = frame[list(FEATURE_COLUMNS)].astype(float)
    logger.info(f"✅ Generated D* with {n} records from {snapshots} snapshots "
                f"(sigma={schedule.label}, omega={policy.value}, final {graph!r})")
    return DerivedDataset(frame)


def write_derived(records: DerivedDataset, sink: Union[IO[str], IO[bytes], str, os.PathLike]):
    text = records.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


def _source_lines(source: Union[IO[str], IO[bytes], str, os.PathLike]) -> List[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as handle:
            raw = handle.read()
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DerivedFormatError(f"derived file is not valid utf-8: {e}") from e
    return raw.splitlines()


def read_derived(source: Union[IO[str], IO[bytes], str, os.PathLike]) -> DerivedDataset:
    # Physical line numbers survive the removal of blank lines
    numbered = [(number, line) for number, line in enumerate(_source_lines(source), start=1) if line.strip()]
    if not numbered:
        raise DerivedFormatError("derived file is empty")

    try:
        table = pd.read_csv(io.StringIO("\n".join(line for _, line in numbered)), dtype=str,
                            keep_default_na=False)
    except pd.errors.ParserError as e:
        raise DerivedFormatError(f"malformed derived file: {e}") from e

    if tuple(table.columns) != DERIVED_COLUMNS:
        raise DerivedFormatError(
            f"unexpected derived header: expected {','.join(DERIVED_COLUMNS)}, got {','.join(table.columns)}"
        )

    table = table.fillna("")
    lines = np.array([number for number, _ in numbered[1:]], dtype=np.int64)
    if lines.size != len(table):
        # Quoted fields spanning lines
        lines = table.index.to_numpy() + 2
    for column in ("src", "dst", "label"):
        empty = table[column].eq("").to_numpy(dtype=bool)
        if empty.any():
            line = int(lines[empty][0])
            raise DerivedFormatError(f"missing {column} at line {line}", line=line)

    for column in FEATURE_COLUMNS:
        values = pd.to_numeric(table[column], errors="coerce")
        broken = values.isna().to_numpy(dtype=bool)
        if broken.any():
            line = int(lines[broken][0])
            raise DerivedFormatError(f"non-numeric {column} at line {line}", line=line)
        table[column] = values.astype(float)

    return DerivedDataset(table)


__all__ = [
    "FEATURE_COLUMNS",
    "DERIVED_COLUMNS",
    "BlockSchedule",
    "block_index",
    "DerivedRecord",
    "DerivedDataset",
    "generate",
    "write_derived",
    "read_derived",
]
