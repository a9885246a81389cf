"""Train-on-source, adapt-on-target, evaluate and report.

Every stage reads its inputs from the cache/output directories named in the
config and writes its outputs back there, so stages can be re-run
independently. With ``synthetic=True`` the weather caches are replaced by
``gen_synthetic_pair`` data and nothing touches the network.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import baselines as bl
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .dataset import Dataset, Scaler, SplitSpec, apply_scaler, fit_scaler, split_dataset, validate_records
from .errors import LeakageError, MissingArtifact, MissingResults
from .metrics import (
    METHOD_ORDER,
    EvalReport,
    ImprovementRow,
    evaluate,
    improvement,
    mae,
    mse,
    render_comparison,
    render_improvement,
    render_source_table,
)
from .nn import adapt, init_mlp, train_source
from .power import Site, cache_load, cache_path, cache_store, fetch_daily, gen_synthetic_pair

log = logging.getLogger(__name__)

BASELINES = ("ADB", "GRB", "RFR", "SR")
SOURCE_METHODS = (*BASELINES, "DNN")


# Data access ---------------------------------------------------------------

def _cached_records(cfg: ExperimentConfig, site: Site):
    path = cache_path(cfg.cache_dir, site, cfg.date_range)
    if not path.exists():
        raise MissingArtifact(f"no cached data for {site.name} at {path}; run `fetch` first")
    return cache_load(path)


def load_source(cfg: ExperimentConfig, synthetic: bool = False) -> Dataset:
    if synthetic:
        spec = cfg.synthetic.shift_spec(cfg.targets[0].name, cfg.seed)
        return gen_synthetic_pair(spec, cfg.source.name, cfg.targets[0].name)[0]
    return validate_records(_cached_records(cfg, cfg.source))


def load_target(cfg: ExperimentConfig, site: Site, synthetic: bool = False) -> Dataset:
    if synthetic:
        spec = cfg.synthetic.shift_spec(site.name, cfg.seed)
        return gen_synthetic_pair(spec, cfg.source.name, site.name)[1]
    return validate_records(_cached_records(cfg, site))


@dataclass(frozen=True)
class SourceSplits:
    train: Dataset       # everything the source models may learn from
    fit: Dataset         # network gradient steps
    val: Dataset         # network early stopping
    test: Dataset
    scaler: Scaler


def source_splits(cfg: ExperimentConfig, ds: Dataset) -> SourceSplits:
    """Train/test split, a validation tail carved from train, and the train-fitted scaler."""
    train, test = split_dataset(ds, cfg.source_split.spec(cfg.seed))
    inner = SplitSpec(1.0 - cfg.validation_fraction, cfg.seed, cfg.source_split.mode)
    fit, val = split_dataset(train, inner)
    return SourceSplits(train, fit, val, test, fit_scaler(train))


def target_splits(cfg: ExperimentConfig, ds: Dataset) -> tuple[Dataset, Dataset]:
    """(adaptation, test) parts of one target city's data."""
    return split_dataset(ds, cfg.target_split.spec(cfg.seed))


# Provenance guard ----------------------------------------------------------

def _keys(provenance: Iterable[tuple]) -> list[str]:
    return [f"{site}|{date.isoformat()}" for site, date in provenance]


def check_unseen(seen: Iterable[str], ds: Dataset, what: str) -> None:
    """Refuse to score a model on rows it was trained or adapted on."""
    overlap = set(seen).intersection(_keys(ds.provenance))
    if overlap:
        raise LeakageError(f"{what}: {len(overlap)} evaluation rows were used in training, e.g. {min(overlap)}")


# Layout --------------------------------------------------------------------

def out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir)


def model_path(cfg: ExperimentConfig, name: str) -> Path:
    return out_dir(cfg) / "models" / f"{name}.npz"


def result_path(cfg: ExperimentConfig, site: Site, method: str) -> Path:
    return out_dir(cfg) / "results" / site.slug / f"{method}.json"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _header(cfg: ExperimentConfig, title: str, synthetic: bool) -> str:
    mode = "synthetic" if synthetic else "NASA POWER"
    return f"# {title}\n# config {cfg.digest()}  seed {cfg.seed}  data {mode}\n"


def _load_model(cfg: ExperimentConfig, name: str) -> Checkpoint:
    path = model_path(cfg, name)
    if not path.exists():
        raise MissingArtifact(f"checkpoint {path} not found; run `train-source` first")
    return load_checkpoint(path)


# Stages --------------------------------------------------------------------

def cmd_fetch(
    cfg: ExperimentConfig,
    force: bool = False,
    fetch: Callable[..., list] = fetch_daily,
) -> list[Path]:
    """Download and cache every configured site; warm caches are left alone unless ``force``."""
    paths = []
    for site in (cfg.source, *cfg.targets):
        path = cache_path(cfg.cache_dir, site, cfg.date_range)
        if path.exists() and not force:
            log.info("%s: cache hit %s", site.name, path)
        else:
            log.info("%s: fetching %s..%s", site.name, cfg.date_range.start, cfg.date_range.end)
            records = fetch(site, cfg.date_range, community=cfg.community)
            cache_store(path, records)
        paths.append(path)
    return paths


def fit_baselines(cfg: ExperimentConfig, train: Dataset) -> dict[str, bl.Model]:
    b = cfg.baselines
    tp = b.tree_params(cfg.seed)
    log.info("fitting baselines on %d rows", len(train))
    return {
        "ADB": bl.fit_adaboost_r2(train, b.boost_rounds, tp),
        "GRB": bl.fit_gradient_boost(train, b.boost_rounds, b.shrinkage, tp),
        "RFR": bl.fit_forest(train, b.n_trees, tp),
        "SR": bl.fit_stacking(
            train, bl.default_stacking_members(tp, b.n_trees, b.boost_rounds, b.shrinkage), b.folds, cfg.seed
        ),
    }


def cmd_train_source(cfg: ExperimentConfig, synthetic: bool = False) -> list[tuple[str, float, float]]:
    """Train the network and the four baselines on the source train split.

    Writes one checkpoint per method plus ``source_comparison.csv``/``.txt``
    with test-split MSE and MAE. Returns the ``(method, mse, mae)`` rows.
    """
    ds = load_source(cfg, synthetic)
    sp = source_splits(cfg, ds)
    scale = lambda d: apply_scaler(sp.scaler, d)
    train, test = scale(sp.train), scale(sp.test)
    seen = _keys(sp.train.provenance)
    check_unseen(seen, sp.test, "source test split")

    net, report = train_source(init_mlp(cfg.mlp_spec(ds.n_features)), scale(sp.fit), scale(sp.val),
                               cfg.train.build(cfg.seed))
    models: dict[str, object] = {**fit_baselines(cfg, train), "DNN": net}

    rows = []
    for method in SOURCE_METHODS:
        pred = models[method].predict(test.features)
        rows.append((method, mse(pred, test.targets), mae(pred, test.targets)))
        name = "dnn_source" if method == "DNN" else method.lower()
        save_checkpoint(model_path(cfg, name), models[method], sp.scaler, cfg.to_dict(),
                        {"method": method, "seen": seen})

    _write_json(out_dir(cfg) / "source_train_report.json", report.to_dict())
    text, csv_text = render_source_table(rows)
    _write_text(out_dir(cfg) / "source_comparison.csv", csv_text)
    _write_text(out_dir(cfg) / "source_comparison.txt",
                _header(cfg, f"source-domain test error ({cfg.source.name})", synthetic) + text)
    return rows


def _save_result(cfg: ExperimentConfig, site: Site, rep: EvalReport) -> None:
    _write_json(result_path(cfg, site, rep.method), rep.to_dict())


def _score(cfg: ExperimentConfig, ck: Checkpoint, method: str, site: Site, test: Dataset) -> EvalReport:
    check_unseen(ck.extra.get("seen", []), test, f"{method} on {site.name}")
    pred = ck.model.predict(apply_scaler(ck.scaler, test).features)
    return evaluate(method, site.name, pred, test.targets, cfg.mape_eps)


def cmd_adapt(cfg: ExperimentConfig, city: str, synthetic: bool = False) -> ImprovementRow:
    """Adapt the source network to one target city and score it before and after."""
    site = cfg.target(city)
    src_ck = _load_model(cfg, "dnn_source")
    sp = source_splits(cfg, load_source(cfg, synthetic))
    tgt_adapt, tgt_test = target_splits(cfg, load_target(cfg, site, synthetic))
    scale = lambda d: apply_scaler(src_ck.scaler, d)

    adapted, report = adapt(src_ck.model, scale(sp.train), scale(tgt_adapt), cfg.adaptation.build(cfg.seed))
    seen = _keys(sp.train.provenance) + _keys(tgt_adapt.provenance)
    ck = Checkpoint(adapted, src_ck.scaler, cfg.to_dict(), {"method": "DWA", "city": site.name, "seen": seen})
    save_checkpoint(model_path(cfg, f"dnn_adapted_{site.slug}"), ck.model, ck.scaler, ck.config, ck.extra)

    before = _score(cfg, src_ck, "DWOA", site, tgt_test)
    after = _score(cfg, ck, "DWA", site, tgt_test)
    row = improvement(before.mape, after.mape, site.name)
    for rep in (before, after):
        _save_result(cfg, site, rep)
    _write_json(out_dir(cfg) / "results" / site.slug / "improvement.json", row.to_dict())
    _write_json(out_dir(cfg) / "results" / site.slug / "adapt_report.json", report.to_dict())
    log.info("%s: MAPE %.4f -> %.4f", site.name, before.mape, after.mape)
    return row


def cmd_evaluate(cfg: ExperimentConfig, synthetic: bool = False,
                 cities: Sequence[str] | None = None) -> list[EvalReport]:
    """Zero-shot scores of the source-trained models on each target test split."""
    sites = cfg.targets if cities is None else [cfg.target(c) for c in cities]
    checkpoints = {m: _load_model(cfg, m.lower()) for m in BASELINES}
    checkpoints["DWOA"] = _load_model(cfg, "dnn_source")
    reports = []
    for site in sites:
        _, tgt_test = target_splits(cfg, load_target(cfg, site, synthetic))
        for method, ck in checkpoints.items():
            rep = _score(cfg, ck, method, site, tgt_test)
            _save_result(cfg, site, rep)
            reports.append(rep)
    return reports


def collect_results(cfg: ExperimentConfig) -> tuple[list[EvalReport], list[ImprovementRow]]:
    reports, rows = [], []
    for site in cfg.targets:
        for method in METHOD_ORDER:
            path = result_path(cfg, site, method)
            if not path.exists():
                raise MissingResults(site.name, method)
            reports.append(EvalReport(**json.loads(path.read_text(encoding="utf-8"))))
        imp = out_dir(cfg) / "results" / site.slug / "improvement.json"
        if not imp.exists():
            raise MissingResults(site.name, "DWA")
        rows.append(ImprovementRow(**json.loads(imp.read_text(encoding="utf-8"))))
    return reports, rows


def cmd_report(cfg: ExperimentConfig, synthetic: bool = False) -> str:
    """Assemble ``comparison.csv``, ``improvement.csv`` and ``report.txt``; return the text."""
    reports, rows = collect_results(cfg)
    cmp_text, cmp_csv = render_comparison(reports)
    imp_text, imp_csv = render_improvement(rows)
    out = out_dir(cfg)
    _write_text(out / "comparison.csv", cmp_csv)
    _write_text(out / "improvement.csv", imp_csv)
    text = (
        _header(cfg, f"target-domain comparison (source {cfg.source.name}, eps {cfg.mape_eps} mm/day)", synthetic)
        + cmp_text + "\n"
        + "# before/after adaptation (MAPE %)\n" + imp_text
    )
    _write_text(out / "report.txt", text)
    return text


def run_all(cfg: ExperimentConfig, synthetic: bool = True) -> str:
    """train-source, adapt every target, evaluate, report."""
    cmd_train_source(cfg, synthetic)
    for site in cfg.targets:
        cmd_adapt(cfg, site.name, synthetic)
    cmd_evaluate(cfg, synthetic)
    return cmd_report(cfg, synthetic)


def synthetic_scores(cfg: ExperimentConfig, city: str) -> tuple[float, float]:
    """Convenience for experiments: (before, after) MAPE for one synthetic target, in memory."""
    site = cfg.target(city)
    sp = source_splits(cfg, load_source(cfg, True))
    tgt_adapt, tgt_test = target_splits(cfg, load_target(cfg, site, True))
    scale = lambda d: apply_scaler(sp.scaler, d)
    net, _ = train_source(init_mlp(cfg.mlp_spec()), scale(sp.fit), scale(sp.val), cfg.train.build(cfg.seed))
    adapted, _ = adapt(net, scale(sp.train), scale(tgt_adapt), cfg.adaptation.build(cfg.seed))
    X = scale(tgt_test).features
    before = evaluate("DWOA", site.name, net.predict(X), tgt_test.targets, cfg.mape_eps).mape
    after = evaluate("DWA", site.name, adapted.predict(X), tgt_test.targets, cfg.mape_eps).mape
    return before, after

