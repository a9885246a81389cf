"""Versioned model checkpoints.

A checkpoint is an uncompressed ``.npz`` archive: every parameter is stored as
a float64/int64 array and a JSON document under ``__meta__`` describes the
model structure, the scaler and the training config. Networks and baseline
ensembles share the container and are told apart by ``kind``/``variant``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .baselines import EnsembleModel, RegressionTree
from .dataset import Scaler
from .errors import ParseError
from .nn import Mlp, MlpSpec

FORMAT = "rainadapt-checkpoint"
VERSION = 1
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples", "sse")


@dataclass
class Checkpoint:
    model: Any
    scaler: Scaler | None = None
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _encode(model, prefix: str, arrays: dict[str, np.ndarray]) -> dict:
    if isinstance(model, Mlp):
        for i, p in enumerate(model.params()):
            arrays[f"{prefix}p{i}"] = p
        for i, (mm, vv) in enumerate(zip(model.m, model.v)):
            arrays[f"{prefix}adam_m{i}"] = mm
            arrays[f"{prefix}adam_v{i}"] = vv
        return {"kind": "mlp", "spec": asdict(model.spec), "t": model.t}
    if isinstance(model, RegressionTree):
        for name in _TREE_FIELDS:
            arrays[prefix + name] = getattr(model, name)
        return {"kind": "tree", "n_features": model.n_features}
    if isinstance(model, EnsembleModel):
        if model.weights is not None:
            arrays[prefix + "weights"] = np.asarray(model.weights, dtype=np.float64)
        if model.meta_coef is not None:
            arrays[prefix + "meta_coef"] = np.asarray(model.meta_coef, dtype=np.float64)
        return {
            "kind": "ensemble",
            "variant": model.variant,
            "n_features": model.n_features,
            "shrinkage": model.shrinkage,
            "init": model.init,
            "member_names": list(model.member_names),
            "members": [_encode(mm, f"{prefix}m{i}/", arrays) for i, mm in enumerate(model.members)],
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _decode(meta: dict, prefix: str, arrays) -> Any:
    kind = meta["kind"]
    if kind == "mlp":
        spec = MlpSpec(**meta["spec"])
        p = [arrays[f"{prefix}p{i}"] for i in range(6)]
        m = Mlp(spec, [p[0], p[2], p[4]], [p[1], p[3], p[5]])
        m.m = [arrays[f"{prefix}adam_m{i}"] for i in range(6)]
        m.v = [arrays[f"{prefix}adam_v{i}"] for i in range(6)]
        m.t = int(meta["t"])
        return m
    if kind == "tree":
        return RegressionTree(*(arrays[prefix + name] for name in _TREE_FIELDS), int(meta["n_features"]))
    if kind == "ensemble":
        members = [_decode(mm, f"{prefix}m{i}/", arrays) for i, mm in enumerate(meta["members"])]
        return EnsembleModel(
            meta["variant"], members, int(meta["n_features"]),
            weights=arrays.get(prefix + "weights"),
            shrinkage=float(meta["shrinkage"]), init=float(meta["init"]),
            meta_coef=arrays.get(prefix + "meta_coef"),
            member_names=list(meta["member_names"]),
        )
    raise ParseError(1, f"unknown model kind {kind!r}")


def save_checkpoint(path: str | os.PathLike, model, scaler: Scaler | None = None,
                    config: dict | None = None, extra: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "model": _encode(model, "model/", arrays),
        "has_scaler": scaler is not None,
        "config": config or {},
        "extra": extra or {},
    }
    if scaler is not None:
        arrays["scaler/mean"] = scaler.mean
        arrays["scaler/std"] = scaler.std
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            np.savez(f, **arrays)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    try:
        meta = json.loads(str(arrays.pop("__meta__")))
    except KeyError:
        raise ParseError(1, f"{path} is not a checkpoint (no metadata)") from None
    if meta.get("format") != FORMAT:
        raise ParseError(1, f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise ParseError(1, f"{path}: unsupported checkpoint version {meta.get('version')}")
    scaler = Scaler(arrays["scaler/mean"], arrays["scaler/std"]) if meta["has_scaler"] else None
    return Checkpoint(_decode(meta["model"], "model/", arrays), scaler, meta["config"], meta["extra"])
