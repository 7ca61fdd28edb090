# graphids/cli/runconfig.py - Run configuration assembled from app config, flags and a key=value file
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple

import pandas as pd

from ..errors import ConfigError
from ..extensions import resolve_workers
from ..services.graph import WeightPolicy
from ..services.ingest import ColumnMapping
from ..services.modelsel import TrainingPlan

# Keys accepted in a --config file and the RunConfig field each one sets
FILE_KEYS = {
    "sigma": "sigma",
    "omega": "policy",
    "policy": "policy",
    "sigmas": "sigmas",
    "policies": "policies",
    "boundary": "boundary",
    "seed": "seed",
    "c_grid": "c_grid",
    "gamma_grid": "gamma_grid",
    "ffs_cap": "ffs_cap",
    "src_column": "src_column",
    "dst_column": "dst_column",
    "timestamp_column": "timestamp_column",
    "timestamp_format": "timestamp_format",
    "dayfirst": "dayfirst",
    "label_column": "label_column",
    "delimiter": "delimiter",
    "benign_label": "benign_label",
    "skip_bad_records": "skip_bad_records",
}


def parse_config_file(path) -> Dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment"""
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected 'key = value'", line=number)
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lower().replace("-", "_")
            if key not in FILE_KEYS:
                raise ConfigError(f"{path}:{number}: unknown key '{key}'", line=number)
            values[FILE_KEYS[key]] = value
    return values


def _floats(value) -> Tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return tuple(float(v) for v in value)
    except ValueError as e:
        raise ConfigError(f"grid must be a comma-separated list of numbers, got {value!r}") from e


def _names(value) -> Tuple[str, ...]:
    if isinstance(value, str):
        value = value.split(",")
    return tuple(str(v).strip() for v in value if str(v).strip())


def _bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


def check_sigma(value) -> str:
    """Normalise a block-size value: a positive integer or N"""
    text = str(value).strip()
    if text.upper() == "N":
        return "N"
    try:
        sigma = int(text)
    except ValueError:
        raise ConfigError(f"sigma must be a positive integer or N, got '{value}'")
    if sigma < 1:
        raise ConfigError(f"sigma must be >= 1, got {sigma}")
    return str(sigma)


def check_policy(value) -> str:
    try:
        return WeightPolicy.parse(value).value
    except ValueError as e:
        raise ConfigError(str(e)) from e


@dataclass(frozen=True)
class RunConfig:
    inputs: Tuple[str, ...] = ()
    src_column: str = "Source IP"
    dst_column: str = "Destination IP"
    timestamp_column: str = "Timestamp"
    timestamp_format: Optional[str] = None
    dayfirst: bool = False
    label_column: str = "Label"
    delimiter: str = ","
    encoding: str = "utf-8"
    benign_label: str = "Benign"
    skip_bad_records: bool = False
    sigma: str = "N"
    policy: str = "unweighted"
    sigmas: Tuple[str, ...] = ("1", "5", "N")
    policies: Tuple[str, ...] = ("unweighted", "weighted", "mixed")
    boundary: Optional[str] = None
    seed: int = 42
    c_grid: Tuple[float, ...] = (0.1, 1.0, 5.0, 10.0, 1e2, 1e3, 1e4, 1e5)
    gamma_grid: Tuple[float, ...] = (0.01, 0.1, 0.5, 1.0)
    ffs_cap: int = 8
    output_dir: str = "."
    workers: int = 1

    @classmethod
    def build(cls, app_config: Mapping[str, Any], flags: Mapping[str, Any],
              config_file: Optional[str] = None) -> "RunConfig":
        """App configuration, then command-line flags, then the config file"""
        values: Dict[str, Any] = {
            "src_column": app_config.get("SRC_COLUMN", cls.src_column),
            "dst_column": app_config.get("DST_COLUMN", cls.dst_column),
            "timestamp_column": app_config.get("TIMESTAMP_COLUMN", cls.timestamp_column),
            "timestamp_format": app_config.get("TIMESTAMP_FORMAT"),
            "dayfirst": app_config.get("DAYFIRST", cls.dayfirst),
            "label_column": app_config.get("LABEL_COLUMN", cls.label_column),
            "delimiter": app_config.get("DELIMITER", cls.delimiter),
            "encoding": app_config.get("ENCODING", cls.encoding),
            "benign_label": app_config.get("BENIGN_LABEL", cls.benign_label),
            "sigmas": app_config.get("SIGMAS", cls.sigmas),
            "policies": app_config.get("POLICIES", cls.policies),
            "seed": app_config.get("SEED", cls.seed),
            "c_grid": app_config.get("C_GRID", cls.c_grid),
            "gamma_grid": app_config.get("GAMMA_GRID", cls.gamma_grid),
            "ffs_cap": app_config.get("FFS_CAP", cls.ffs_cap),
        }
        values.update({k: v for k, v in flags.items() if v is not None and v != ()})
        if config_file:
            values.update(parse_config_file(config_file))

        workers = resolve_workers() if "GIDS_WORKERS" in os.environ else resolve_workers(
            app_config.get("WORKERS", 1))

        try:
            config = cls(
                inputs=tuple(str(p) for p in values.get("inputs", ())),
                src_column=str(values["src_column"]),
                dst_column=str(values["dst_column"]),
                timestamp_column=str(values["timestamp_column"]),
                timestamp_format=values.get("timestamp_format") or None,
                dayfirst=_bool(values.get("dayfirst", False)),
                label_column=str(values["label_column"]),
                delimiter=str(values["delimiter"]),
                encoding=str(values["encoding"]),
                benign_label=str(values["benign_label"]),
                skip_bad_records=_bool(values.get("skip_bad_records", False)),
                sigma=check_sigma(values.get("sigma", cls.sigma)),
                policy=check_policy(values.get("policy", cls.policy)),
                sigmas=tuple(check_sigma(s) for s in _names(values["sigmas"])),
                policies=tuple(check_policy(p) for p in _names(values["policies"])),
                boundary=values.get("boundary"),
                seed=int(values["seed"]),
                c_grid=_floats(values["c_grid"]),
                gamma_grid=_floats(values["gamma_grid"]),
                ffs_cap=int(values["ffs_cap"]),
                output_dir=str(values.get("output_dir", cls.output_dir)),
                workers=workers,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid run configuration: {e}") from e

        config.validate()
        return config

    def validate(self):
        problems = []
        if self.ffs_cap < 1:
            problems.append("ffs_cap must be >= 1")
        if not self.c_grid or not self.gamma_grid:
            problems.append("grids must be non-empty")
        if any(v <= 0 for v in self.c_grid + self.gamma_grid):
            problems.append("grid values must be positive")
        if not self.sigmas or not self.policies:
            problems.append("sigmas and policies must be non-empty")
        if self.boundary is not None:
            try:
                pd.Timestamp(self.boundary)
            except ValueError:
                problems.append(f"boundary '{self.boundary}' is not a timestamp")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def cells(self) -> List[Tuple[str, str]]:
        """(sigma, omega) combinations of the comparison matrix, sigma-major"""
        return [(sigma, policy) for sigma in self.sigmas for policy in self.policies]

    @property
    def mapping(self) -> ColumnMapping:
        return ColumnMapping(
            src=self.src_column,
            dst=self.dst_column,
            timestamp=self.timestamp_column,
            timestamp_format=self.timestamp_format,
            dayfirst=self.dayfirst,
            label=self.label_column,
            delimiter=self.delimiter,
            encoding=self.encoding,
            benign_label=self.benign_label,
        )

    def training_plan(self, app_config: Mapping[str, Any], workers: Optional[int] = None) -> TrainingPlan:
        return TrainingPlan.from_config(
            app_config,
            c_grid=self.c_grid,
            gamma_grid=self.gamma_grid,
            ffs_cap=self.ffs_cap,
            seed=self.seed,
            workers=self.workers if workers is None else workers,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Canonical form: input basenames only, no output directory or worker count"""
        data = dataclasses.asdict(self)
        data["inputs"] = [os.path.basename(p) for p in self.inputs]
        data.pop("output_dir")
        data.pop("workers")
        return data

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


__all__ = ["RunConfig", "parse_config_file", "check_sigma", "check_policy", "file_digest", "FILE_KEYS"]
