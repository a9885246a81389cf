"""Experiment configuration (one JSON file per experiment directory)."""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import TreeParams
from .dataset import SplitSpec
from .metrics import DEFAULT_EPS
from .nn import AdaptationConfig, MlpSpec, TrainConfig
from .power import CITIES, DEFAULT_RANGE, DateRange, ShiftSpec, Site, SYNTH_STD


@dataclass(frozen=True)
class SplitConfig:
    ratio: float
    mode: str = "chronological"

    def spec(self, seed: int) -> SplitSpec:
        return SplitSpec(self.ratio, seed, self.mode)


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs, self.patience, seed)


@dataclass(frozen=True)
class AdaptSettings:
    lambda1: float = 0.5
    lambda2: float = 0.5
    reinit: bool = False
    train: TrainSettings = TrainSettings()

    def build(self, seed: int) -> AdaptationConfig:
        return AdaptationConfig(self.lambda1, self.lambda2, self.train.build(seed), self.reinit)


@dataclass(frozen=True)
class BaselineSettings:
    n_trees: int = 100
    max_depth: int | None = 8
    min_samples_leaf: int = 5
    boost_rounds: int = 100
    shrinkage: float = 0.1
    folds: int = 5

    def tree_params(self, seed: int) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_leaf, seed)


@dataclass(frozen=True)
class SyntheticTarget:
    shift_sigma: float = 1.5
    response_scale: float = 1.5


@dataclass(frozen=True)
class SyntheticSettings:
    n_source: int = 7305
    n_target: int = 7305
    noise_std: float = 0.5
    targets: dict[str, SyntheticTarget] = field(default_factory=lambda: {
        "Paris": SyntheticTarget(1.5, 1.5),
        "Los Angeles": SyntheticTarget(1.0, 0.8),
        "Tokyo": SyntheticTarget(2.0, 1.3),
    })

    def shift_spec(self, city: str, seed: int) -> ShiftSpec:
        t = self.targets.get(city, SyntheticTarget())
        return ShiftSpec(self.n_source, self.n_target, t.shift_sigma * SYNTH_STD, t.response_scale,
                         self.noise_std, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    source: Site = CITIES["Dhaka"]
    targets: tuple[Site, ...] = (CITIES["Paris"], CITIES["Los Angeles"], CITIES["Tokyo"])
    date_range: DateRange = DEFAULT_RANGE
    community: str = "ag"
    source_split: SplitConfig = SplitConfig(0.8)
    validation_fraction: float = 0.1
    target_split: SplitConfig = SplitConfig(0.5)
    scaler_policy: str = "source-train"
    hidden_dims: tuple[int, int] = (64, 32)
    train: TrainSettings = TrainSettings()
    adaptation: AdaptSettings = AdaptSettings()
    baselines: BaselineSettings = BaselineSettings()
    mape_eps: float = DEFAULT_EPS
    cache_dir: str = "cache"
    output_dir: str = "out"
    synthetic: SyntheticSettings = SyntheticSettings()

    def __post_init__(self):
        if not self.targets:
            raise ValueError("at least one target site is required")
        names = [self.source.name, *(t.name for t in self.targets)]
        if len(set(names)) != len(names):
            raise ValueError("site names must be distinct")
        if self.scaler_policy != "source-train":
            raise ValueError("only the 'source-train' scaler policy is supported")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        self.source_split.spec(self.seed)
        self.target_split.spec(self.seed)
        self.mlp_spec()
        self.train.build(self.seed)
        self.adaptation.build(self.seed)
        self.baselines.tree_params(self.seed)

    def mlp_spec(self, input_dim: int = 15) -> MlpSpec:
        return MlpSpec(input_dim, self.hidden_dims, "relu", self.seed)

    def target(self, name: str) -> Site:
        for t in self.targets:
            if t.name.lower() == name.lower():
                return t
        raise KeyError(f"unknown target city {name!r}; configured: {', '.join(t.name for t in self.targets)}")

    def to_dict(self) -> dict:
        return _plain(self)

    def digest(self) -> str:
        """Short hash of the canonical JSON form (directories excluded); embedded in every report."""
        d = self.to_dict()
        del d["cache_dir"], d["output_dir"]
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def with_overrides(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        kw = {}
        if "source" in d:
            kw["source"] = Site(**d.pop("source"))
        if "targets" in d:
            kw["targets"] = tuple(Site(**t) for t in d.pop("targets"))
        if "date_range" in d:
            r = d.pop("date_range")
            kw["date_range"] = DateRange(dt.date.fromisoformat(r["start"]), dt.date.fromisoformat(r["end"]))
        for key, kind in (("source_split", SplitConfig), ("target_split", SplitConfig),
                          ("train", TrainSettings), ("baselines", BaselineSettings)):
            if key in d:
                kw[key] = kind(**d.pop(key))
        if "adaptation" in d:
            a = dict(d.pop("adaptation"))
            if "train" in a:
                a["train"] = TrainSettings(**a["train"])
            kw["adaptation"] = AdaptSettings(**a)
        if "synthetic" in d:
            s = dict(d.pop("synthetic"))
            if "targets" in s:
                s["targets"] = {k: SyntheticTarget(**v) for k, v in s["targets"].items()}
            kw["synthetic"] = SyntheticSettings(**s)
        if "hidden_dims" in d:
            kw["hidden_dims"] = tuple(d.pop("hidden_dims"))
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d, **kw)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, dt.date):
        return obj.isoformat()
    return obj


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read a JSON config; relative cache/output dirs resolve against the file's directory."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    base = path.parent
    for key in ("cache_dir", "output_dir"):
        if key in d and not Path(d[key]).is_absolute():
            d[key] = str(base / d[key])
        elif key not in d:
            d[key] = str(base / ExperimentConfig.__dataclass_fields__[key].default)
    return ExperimentConfig.from_dict(d)


def write_config(path: str | os.PathLike, cfg: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
