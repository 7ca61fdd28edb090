# graphids/services/ingest.py - Connection tables: parsing, split and undersampling
import io
import ipaddress
import os
from dataclasses import dataclass
from typing import IO, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import DatasetError
from ..extensions import logger

CORE_COLUMNS = ("src", "dst", "ts", "label")
TIMESTAMP_OUTPUT_FORMAT = "%Y-%m-%d %H:%M:%S.%f"

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


@dataclass(frozen=True)
class ColumnMapping:
    """Where the core fields live in a delimited connection table"""

    src: str = "Source IP"
    dst: str = "Destination IP"
    timestamp: str = "Timestamp"
    label: str = "Label"
    delimiter: str = ","
    encoding: str = "utf-8"
    timestamp_format: Optional[str] = None
    dayfirst: bool = False
    benign_label: str = "Benign"

    def required(self) -> Dict[str, str]:
        return {"src": self.src, "dst": self.dst, "ts": self.timestamp, "label": self.label}


@dataclass(frozen=True)
class Connection:
    src: str
    dst: str
    ts: pd.Timestamp
    label: str
    classic: Tuple[str, ...] = ()


class ConnectionDataset:
    """Chronologically ordered connections (D) backed by a pandas frame.

    The frame index holds each record's position in the full sorted
    corpus, so subsets produced by split/undersample can be matched back
    to derived records.
    """

    def __init__(self, frame: pd.DataFrame, classic_columns: Sequence[str] = (),
                 benign_label: str = "Benign", skipped: int = 0):
        self._frame = frame
        self.classic_columns = tuple(classic_columns)
        self.benign_label = benign_label
        self.skipped = skipped

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def positions(self) -> np.ndarray:
        return self._frame.index.to_numpy(dtype=np.int64)

    @property
    def src(self) -> np.ndarray:
        return self._frame["src"].to_numpy()

    @property
    def dst(self) -> np.ndarray:
        return self._frame["dst"].to_numpy()

    @property
    def labels(self) -> np.ndarray:
        return self._frame["label"].to_numpy()

    @property
    def timestamps(self) -> pd.Series:
        return self._frame["ts"]

    def benign_mask(self) -> np.ndarray:
        return self._frame["label"].str.casefold().eq(self.benign_label.casefold()).to_numpy()

    def __len__(self) -> int:
        return len(self._frame)

    def __getitem__(self, i: int) -> Connection:
        row = self._frame.iloc[i]
        return Connection(
            src=row["src"],
            dst=row["dst"],
            ts=row["ts"],
            label=row["label"],
            classic=tuple(row[c] for c in self.classic_columns),
        )

    def records(self) -> Iterator[Connection]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, mask: np.ndarray) -> "ConnectionDataset":
        return ConnectionDataset(self._frame[mask], self.classic_columns, self.benign_label)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConnectionDataset):
            return NotImplemented
        if self.classic_columns != other.classic_columns or len(self) != len(other):
            return False
        left = self._frame.reset_index(drop=True)
        right = other._frame.reset_index(drop=True)
        return left.equals(right)

    def __repr__(self) -> str:
        return f"ConnectionDataset(N={len(self)}, classic={len(self.classic_columns)})"


def is_benign(label: str, benign_label: str = "Benign") -> bool:
    return str(label).strip().casefold() == benign_label.casefold()


def _valid_ip(value: str) -> bool:
    try:
        ipaddress.ip_address(value)
        return True
    except ValueError:
        return False


def _read_table(source: Source, mapping: ColumnMapping) -> pd.DataFrame:
    def read(src, encoding):
        return pd.read_csv(src, sep=mapping.delimiter, dtype=str, keep_default_na=False, encoding=encoding)

    if isinstance(source, (str, os.PathLike)):
        try:
            return read(source, mapping.encoding)
        except UnicodeDecodeError:
            logger.warning(f"{source}: not valid {mapping.encoding}, retrying as latin-1")
            return read(source, "latin-1")

    raw = source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode(mapping.encoding)
        except UnicodeDecodeError:
            logger.warning(f"Input stream is not valid {mapping.encoding}, decoding as latin-1")
            raw = raw.decode("latin-1")
    return read(io.StringIO(raw), None)


def _parse_timestamps(values: pd.Series, mapping: ColumnMapping) -> pd.Series:
    parsed = pd.to_datetime(
        values,
        format=mapping.timestamp_format or "mixed",
        dayfirst=mapping.dayfirst,
        errors="coerce",
    )
    if getattr(parsed.dt, "tz", None) is not None:
        parsed = parsed.dt.tz_convert("UTC").dt.tz_localize(None)
    return parsed.dt.floor("us")


def _frame_from_table(table: pd.DataFrame, mapping: ColumnMapping, source_name: Optional[str],
                      skip_bad_records: bool) -> Tuple[pd.DataFrame, List[str], int]:
    table.columns = table.columns.str.strip()
    # Short rows leave NaN behind even with keep_default_na=False
    table = table.fillna("")

    for field, column in mapping.required().items():
        if column not in table.columns:
            raise DatasetError(f"missing {field} column '{column}'", column=column, source=source_name)

    mapped = set(mapping.required().values())
    classic = [c for c in table.columns if c not in mapped]

    frame = pd.DataFrame({
        "src": table[mapping.src].str.strip(),
        "dst": table[mapping.dst].str.strip(),
        "ts": _parse_timestamps(table[mapping.timestamp].str.strip(), mapping),
        "label": table[mapping.label].str.strip(),
    })
    for column in classic:
        frame[column] = table[column]

    # Header occupies line 1
    lines = table.index.to_numpy() + 2
    problems = [
        ("src", "missing src", frame["src"].eq("").to_numpy(dtype=bool)),
        ("dst", "missing dst", frame["dst"].eq("").to_numpy(dtype=bool)),
        ("src", "invalid src address", ~frame["src"].map(_valid_ip).to_numpy(dtype=bool)),
        ("dst", "invalid dst address", ~frame["dst"].map(_valid_ip).to_numpy(dtype=bool)),
        ("ts", "unparseable timestamp", frame["ts"].isna().to_numpy(dtype=bool)),
        ("label", "missing label", frame["label"].eq("").to_numpy(dtype=bool)),
    ]

    bad = np.zeros(len(frame), dtype=bool)
    first: Optional[Tuple[int, str, str]] = None
    for field, reason, mask in problems:
        # Empty endpoints also fail address validation; report the first reason only
        mask = mask & ~bad
        if mask.any():
            line = int(lines[mask][0])
            if first is None or line < first[0]:
                first = (line, field, reason)
        bad |= mask

    if first is not None and not skip_bad_records:
        line, field, reason = first
        where = f"{source_name}:" if source_name else ""
        raise DatasetError(f"{reason} at {where}line {line}", column=field, line=line, source=source_name)

    skipped = int(bad.sum())
    if skipped:
        logger.warning(f"Skipped {skipped} malformed records{' in ' + source_name if source_name else ''}")
        frame = frame[~bad]

    return frame, classic, skipped


def _finish(frames: List[pd.DataFrame], classic: List[str], mapping: ColumnMapping,
            skipped: int) -> ConnectionDataset:
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(CORE_COLUMNS))
    frame = frame.sort_values("ts", kind="stable").reset_index(drop=True)
    return ConnectionDataset(frame, classic, mapping.benign_label, skipped)


def parse_connections(source: Source, mapping: ColumnMapping = ColumnMapping(),
                      skip_bad_records: bool = False) -> ConnectionDataset:
    """Parse one delimited connection table into a chronologically sorted dataset"""
    name = str(source) if isinstance(source, (str, os.PathLike)) else None
    frame, classic, skipped = _frame_from_table(_read_table(source, mapping), mapping, name, skip_bad_records)
    dataset = _finish([frame], classic, mapping, skipped)
    logger.info(f"Parsed {len(dataset)} connections{' from ' + name if name else ''}")
    return dataset


def load_connections(paths: Sequence[Source], mapping: ColumnMapping = ColumnMapping(),
                     skip_bad_records: bool = False) -> ConnectionDataset:
    """Parse several files (e.g. one per capture day) into one sorted dataset"""
    if not paths:
        raise DatasetError("no input files given")

    frames, classic, skipped = [], None, 0
    for path in paths:
        name = str(path) if isinstance(path, (str, os.PathLike)) else None
        frame, columns, bad = _frame_from_table(_read_table(path, mapping), mapping, name, skip_bad_records)
        if classic is None:
            classic = columns
        elif columns != classic:
            # Keep the first file's layout; extra columns are not needed for graph features
            frame = frame.reindex(columns=list(CORE_COLUMNS) + classic, fill_value="")
        frames.append(frame)
        skipped += bad

    dataset = _finish(frames, classic or [], mapping, skipped)
    logger.info(f"✅ Loaded {len(dataset)} connections from {len(paths)} file(s), skipped {skipped}")
    return dataset


def serialize_connections(d: ConnectionDataset, sink: Union[IO[str], IO[bytes], str, os.PathLike],
                          mapping: ColumnMapping = ColumnMapping()):
    """Write a dataset back in the delimited format parse_connections reads"""
    frame = d.frame
    out = pd.DataFrame({
        mapping.src: frame["src"],
        mapping.dst: frame["dst"],
        mapping.timestamp: frame["ts"].dt.strftime(TIMESTAMP_OUTPUT_FORMAT),
        mapping.label: frame["label"],
    })
    for column in d.classic_columns:
        out[column] = frame[column]

    text = out.to_csv(sep=mapping.delimiter, index=False, lineterminator="\n")
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


def split_train_test(d: ConnectionDataset, boundary) -> Tuple[ConnectionDataset, ConnectionDataset]:
    """Records strictly before the boundary train; the rest test"""
    boundary = pd.Timestamp(boundary)
    before = (d.timestamps < boundary).to_numpy()

    if not before.any() or before.all():
        raise DatasetError(
            f"split boundary {boundary} leaves an empty side "
            f"(data spans {d.timestamps.min()} .. {d.timestamps.max()})"
        )

    train, test = d.subset(before), d.subset(~before)
    logger.info(f"📊 Split at {boundary}: train={len(train)} test={len(test)}")
    return train, test


def undersample_benign(d: ConnectionDataset, seed: int) -> ConnectionDataset:
    """Keep every malicious record and an equally sized random benign subset"""
    benign = d.benign_mask()
    n_malicious = int((~benign).sum())
    n_benign = int(benign.sum())

    if n_benign < n_malicious:
        raise DatasetError(f"cannot undersample: {n_benign} benign < {n_malicious} malicious records")

    rng = np.random.default_rng(seed)
    benign_rows = np.flatnonzero(benign)
    chosen = rng.choice(benign_rows, size=n_malicious, replace=False) if n_malicious else benign_rows[:0]

    keep = ~benign
    keep[chosen] = True
    logger.info(f"Undersampled benign class: kept {n_malicious} of {n_benign} (seed {seed})")
    return d.subset(keep)


def class_distribution(d: ConnectionDataset, reference_size: Optional[int] = None) -> Dict[str, object]:
    """Per-label counts with benign/malicious totals"""
    benign = d.benign_mask()
    counts = pd.Series(d.labels).value_counts().sort_index()
    attacks = {str(k): int(v) for k, v in counts.items() if not is_benign(k, d.benign_label)}
    total = len(d)
    reference = reference_size or total

    return {
        "total": total,
        "benign": int(benign.sum()),
        "malicious": int((~benign).sum()),
        "attacks": attacks,
        "share_of_reference": round(total / reference, 6) if reference else 0.0,
    }


__all__ = [
    "ColumnMapping",
    "Connection",
    "ConnectionDataset",
    "is_benign",
    "parse_connections",
    "load_connections",
    "serialize_connections",
    "split_train_test",
    "undersample_benign",
    "class_distribution",
]
