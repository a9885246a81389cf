"""Weather-record schema, validation, standardization and splitting."""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    EmptyAfterValidation,
    EmptyInput,
    EmptyPartition,
)

log = logging.getLogger(__name__)

# Service parameter names, in cache/record column order. The last one is the target.
PARAMETERS: tuple[str, ...] = (
    "T2M",
    "T2MDEW",
    "T2MWET",
    "TS",
    "T2M_RANGE",
    "T2M_MAX",
    "T2M_MIN",
    "QV2M",
    "RH2M",
    "PS",
    "WS10M",
    "WS10M_MAX",
    "WS10M_MIN",
    "WS10M_RANGE",
    "WD10M",
    "PRECTOTCORR",
)
FEATURES: tuple[str, ...] = PARAMETERS[:-1]
TARGET = PARAMETERS[-1]
N_FEATURES = len(FEATURES)

FILL_VALUE = -999.0


@dataclass(frozen=True)
class WeatherRecord:
    """One day at one site. Units follow the upstream service (degC, g/kg, %, kPa, m/s, deg, mm/day)."""

    site_id: str
    date: dt.date
    t2m: float
    t2mdew: float
    t2mwet: float
    ts: float
    t2m_range: float
    t2m_max: float
    t2m_min: float
    qv2m: float
    rh2m: float
    ps: float
    ws10m: float
    ws10m_max: float
    ws10m_min: float
    ws10m_range: float
    wd10m: float
    prectot: float

    def values(self) -> tuple[float, ...]:
        """All 16 numeric values in ``PARAMETERS`` order."""
        return (
            self.t2m, self.t2mdew, self.t2mwet, self.ts, self.t2m_range,
            self.t2m_max, self.t2m_min, self.qv2m, self.rh2m, self.ps,
            self.ws10m, self.ws10m_max, self.ws10m_min, self.ws10m_range,
            self.wd10m, self.prectot,
        )

    @classmethod
    def from_values(cls, site_id: str, date: dt.date, values: Sequence[float]) -> WeatherRecord:
        if len(values) != len(PARAMETERS):
            raise DimensionMismatch(f"expected {len(PARAMETERS)} values, got {len(values)}")
        return cls(site_id, date, *(float(v) for v in values))


def record_problems(rec: WeatherRecord) -> list[str]:
    """Reasons a record violates the schema invariants (empty when valid)."""
    problems = []
    vals = rec.values()
    for name, v in zip(PARAMETERS, vals):
        if not math.isfinite(v):
            problems.append(f"{name.lower()} not finite")
        elif v == FILL_VALUE:
            problems.append(f"{name.lower()} is fill value")
    if problems:
        return problems
    if not 0.0 <= rec.rh2m <= 100.0:
        problems.append("rh2m out of range")
    if rec.prectot < 0.0:
        problems.append("prectot negative")
    if not 0.0 <= rec.wd10m < 360.0:
        problems.append("wd10m out of range")
    if not rec.ws10m_min <= rec.ws10m <= rec.ws10m_max:
        problems.append("ws10m outside [ws10m_min, ws10m_max]")
    if not rec.t2m_min <= rec.t2m <= rec.t2m_max:
        problems.append("t2m outside [t2m_min, t2m_max]")
    return problems


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (N x 15, ``FEATURES`` column order), target vector and row provenance."""

    features: np.ndarray
    targets: np.ndarray
    provenance: tuple[tuple[str, dt.date], ...]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],) or len(self.provenance) != X.shape[0]:
            raise DimensionMismatch(
                f"row counts disagree: features {X.shape[0]}, targets {y.shape}, "
                f"provenance {len(self.provenance)}"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "provenance", tuple((str(s), d) for s, d in self.provenance))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx: Sequence[int] | np.ndarray) -> Dataset:
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.targets[idx], tuple(self.provenance[i] for i in idx))

    def with_features(self, X: np.ndarray) -> Dataset:
        return Dataset(X, self.targets, self.provenance)

    def to_records(self) -> list[WeatherRecord]:
        if self.n_features != N_FEATURES:
            raise DimensionMismatch("only 15-feature datasets map back to weather records")
        return [
            WeatherRecord.from_values(site, date, (*row, t))
            for (site, date), row, t in zip(self.provenance, self.features.tolist(), self.targets.tolist())
        ]

    def equals(self, other: Dataset) -> bool:
        return (
            self.provenance == other.provenance
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
        )


def records_to_dataset(records: Iterable[WeatherRecord]) -> Dataset:
    records = list(records)
    if not records:
        return Dataset(np.empty((0, N_FEATURES)), np.empty(0), ())
    vals = np.array([r.values() for r in records], dtype=np.float64)
    return Dataset(vals[:, :-1], vals[:, -1], tuple((r.site_id, r.date) for r in records))


def partition_records(raw: Iterable[WeatherRecord]) -> tuple[list[WeatherRecord], list[tuple[WeatherRecord, list[str]]]]:
    kept, rejected = [], []
    for rec in raw:
        problems = record_problems(rec)
        if problems:
            rejected.append((rec, problems))
        else:
            kept.append(rec)
    return kept, rejected


def validate_records(
    raw: Sequence[WeatherRecord],
    rejected: list[tuple[WeatherRecord, list[str]]] | None = None,
) -> Dataset:
    """Drop records that break the schema invariants and pack the rest.

    Row order is preserved. Rejections are logged and, when ``rejected`` is
    given, appended to it as ``(record, reasons)`` pairs.
    """
    if len(raw) == 0:
        raise EmptyInput("no records to validate")
    kept, bad = partition_records(raw)
    for rec, problems in bad:
        log.debug("rejected %s %s: %s", rec.site_id, rec.date, "; ".join(problems))
    if bad:
        log.info("validation rejected %d of %d records", len(bad), len(raw))
    if rejected is not None:
        rejected.extend(bad)
    if not kept:
        raise EmptyAfterValidation(f"all {len(raw)} records failed validation")
    return records_to_dataset(kept)


@dataclass(frozen=True, eq=False)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Scaler:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_scaler(ds: Dataset) -> Scaler:
    """Per-column mean and population standard deviation."""
    if len(ds) < 2:
        raise EmptyInput("need at least 2 rows to fit a scaler")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0, ddof=0)
    for j, s in enumerate(std):
        if not s >= 1e-12:
            name = FEATURES[j] if ds.n_features == N_FEATURES else None
            raise DegenerateColumn(j, name)
    return Scaler(mean, std)


def _check_dim(sc: Scaler, X: np.ndarray) -> None:
    if X.shape[1] != sc.dim:
        raise DimensionMismatch(f"scaler has {sc.dim} columns, data has {X.shape[1]}")


def apply_scaler(sc: Scaler, ds: Dataset) -> Dataset:
    _check_dim(sc, ds.features)
    return ds.with_features((ds.features - sc.mean) / sc.std)


def invert_scaler(sc: Scaler, ds: Dataset) -> Dataset:
    _check_dim(sc, ds.features)
    return ds.with_features(ds.features * sc.std + sc.mean)


@dataclass(frozen=True)
class SplitSpec:
    ratio: float
    seed: int = 0
    mode: Literal["chronological", "shuffled"] = "chronological"

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"split ratio must lie strictly in (0, 1), got {self.ratio}")
        if self.mode not in ("chronological", "shuffled"):
            raise ValueError(f"unknown split mode {self.mode!r}")


def split_sizes(n: int, ratio: float) -> tuple[int, int]:
    # The small guard keeps e.g. 0.29 * 100 from flooring to 28.
    k = math.floor(ratio * n + 1e-9)
    return k, n - k


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition into ``floor(ratio * N)`` and the remaining rows.

    Chronological mode orders rows by date (stable) and puts the earliest in
    the first part. Shuffled mode draws one permutation from
    ``numpy.random.default_rng(seed)``; each part keeps the original row order.
    """
    n = len(ds)
    k, rest = split_sizes(n, spec.ratio)
    if k == 0 or rest == 0:
        raise EmptyPartition(f"ratio {spec.ratio} on {n} rows leaves an empty part")
    if spec.mode == "chronological":
        order = sorted(range(n), key=lambda i: ds.provenance[i][1])
        first, second = order[:k], order[k:]
    else:
        perm = np.random.default_rng(spec.seed).permutation(n)
        first, second = np.sort(perm[:k]), np.sort(perm[k:])
    return ds.take(first), ds.take(second)


def concat(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise EmptyInput("nothing to concatenate")
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.targets for p in parts]),
        tuple(row for p in parts for row in p.provenance),
    )
