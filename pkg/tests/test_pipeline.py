import datetime as dt
import json
import shutil

import numpy as np
import pytest

from rainadapt import pipeline
from rainadapt.config import ExperimentConfig, load_config
from rainadapt.dataset import Dataset, WeatherRecord
from rainadapt.errors import LeakageError, MissingArtifact, MissingResults, NetworkError
from rainadapt.metrics import read_comparison_csv
from rainadapt.power import DateRange, ShiftSpec, cache_path, cache_store, gen_synthetic_pair

SMALL = {
    "seed": 1,
    "date_range": {"start": "2003-01-01", "end": "2003-12-31"},
    "train": {"max_epochs": 6, "patience": 6},
    "adaptation": {"train": {"max_epochs": 6, "patience": 6}},
    "baselines": {"n_trees": 4, "boost_rounds": 4, "folds": 3, "max_depth": 4},
    "synthetic": {"n_source": 400, "n_target": 240},
}


def small_config(tmp_path, **extra) -> ExperimentConfig:
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({**SMALL, **extra}))
    return load_config(path)


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    cfg = small_config(tmp_path_factory.mktemp("demo"))
    text = pipeline.run_all(cfg, synthetic=True)
    return cfg, text


class TestSyntheticRun:
    def test_comparison_has_all_rows(self, demo):
        cfg, text = demo
        rows = read_comparison_csv((pipeline.out_dir(cfg) / "comparison.csv").read_text())
        assert len(rows) == 18
        assert {m for _, m, _ in rows} == {"ADB", "GRB", "RFR", "SR", "DWOA", "DWA"}
        assert cfg.digest() in text

    def test_improvement_rows(self, demo):
        cfg, _ = demo
        lines = (pipeline.out_dir(cfg) / "improvement.csv").read_text().splitlines()
        assert lines[0] == "city,before_mape,after_mape,point_drop,relative_drop"
        assert [line.split(",")[0] for line in lines[1:]] == ["Paris", "Los Angeles", "Tokyo"]

    def test_source_comparison_has_five_methods(self, demo):
        cfg, _ = demo
        lines = (pipeline.out_dir(cfg) / "source_comparison.csv").read_text().splitlines()
        assert [line.split(",")[0] for line in lines[1:]] == ["ADB", "GRB", "RFR", "SR", "DNN"]

    def test_checkpoints_written(self, demo):
        cfg, _ = demo
        names = sorted(p.stem for p in (pipeline.out_dir(cfg) / "models").iterdir())
        assert names == ["adb", "dnn_adapted_los_angeles", "dnn_adapted_paris", "dnn_adapted_tokyo",
                         "dnn_source", "grb", "rfr", "sr"]

    def test_report_rerender_is_byte_identical(self, demo):
        cfg, _ = demo
        out = pipeline.out_dir(cfg)
        before = [(out / f).read_bytes() for f in ("comparison.csv", "improvement.csv", "report.txt")]
        pipeline.cmd_report(cfg, synthetic=True)
        assert [(out / f).read_bytes() for f in ("comparison.csv", "improvement.csv", "report.txt")] == before

    def test_missing_result_is_named(self, demo, tmp_path):
        cfg, _ = demo
        copy = cfg.with_overrides(output_dir=str(tmp_path / "out"))
        shutil.copytree(pipeline.out_dir(cfg), copy.output_dir)
        pipeline.result_path(copy, copy.target("Tokyo"), "GRB").unlink()
        with pytest.raises(MissingResults) as exc:
            pipeline.cmd_report(copy)
        assert (exc.value.city, exc.value.method) == ("Tokyo", "GRB")

    def test_adapt_before_training(self, tmp_path):
        with pytest.raises(MissingArtifact):
            pipeline.cmd_adapt(small_config(tmp_path), "Paris", synthetic=True)


class TestLeakageGuard:
    def test_overlap_refused(self):
        d = dt.date(2003, 5, 1)
        ds = Dataset(np.zeros((2, 1)), np.zeros(2), (("Paris", d), ("Paris", d + dt.timedelta(1))))
        pipeline.check_unseen(["Paris|2003-04-30"], ds, "x")
        with pytest.raises(LeakageError):
            pipeline.check_unseen(["Paris|2003-05-02"], ds, "x")

    def test_source_test_split_is_unseen(self, tmp_path):
        cfg = small_config(tmp_path)
        sp = pipeline.source_splits(cfg, pipeline.load_source(cfg, True))
        assert set(sp.fit.provenance) | set(sp.val.provenance) == set(sp.train.provenance)
        assert set(sp.train.provenance).isdisjoint(sp.test.provenance)

    def test_scoring_on_training_rows_fails(self, demo):
        cfg, _ = demo
        ck = pipeline._load_model(cfg, "dnn_source")
        sp = pipeline.source_splits(cfg, pipeline.load_source(cfg, True))
        with pytest.raises(LeakageError):
            pipeline._score(cfg, ck, "DWOA", cfg.targets[0], sp.train)


def _fake_fetch(calls, fail=()):
    def fetch(site, range_, community):
        calls.append(site.name)
        if site.name in fail:
            raise NetworkError(f"{site.name}: connection refused")
        spec = ShiftSpec(range_.n_days, range_.n_days, seed=len(site.name))
        ds = gen_synthetic_pair(spec, site.name, site.name)[0]
        return [WeatherRecord.from_values(site.name, d, r.values())
                for r, d in zip(ds.to_records(), range_.days())]
    return fetch


class TestFetchStage:
    def test_one_file_per_site_and_warm_cache(self, tmp_path):
        cfg = small_config(tmp_path)
        calls = []
        paths = pipeline.cmd_fetch(cfg, fetch=_fake_fetch(calls))
        assert len(paths) == 4 and all(p.exists() for p in paths)
        assert calls == ["Dhaka", "Paris", "Los Angeles", "Tokyo"]
        pipeline.cmd_fetch(cfg, fetch=_fake_fetch(calls))
        assert len(calls) == 4
        pipeline.cmd_fetch(cfg, force=True, fetch=_fake_fetch(calls))
        assert len(calls) == 8

    def test_cold_cache_without_network(self, tmp_path):
        cfg = small_config(tmp_path)
        with pytest.raises(NetworkError, match="Dhaka"):
            pipeline.cmd_fetch(cfg, fetch=_fake_fetch([], fail={"Dhaka"}))

    def test_cached_pipeline_end_to_end(self, tmp_path):
        cfg = small_config(tmp_path)
        pipeline.cmd_fetch(cfg, fetch=_fake_fetch([]))
        rows = pipeline.cmd_train_source(cfg)
        assert [r[0] for r in rows] == ["ADB", "GRB", "RFR", "SR", "DNN"]
        row = pipeline.cmd_adapt(cfg, "paris")
        assert row.city == "Paris"
        reps = pipeline.cmd_evaluate(cfg, cities=["Paris"])
        assert {r.method for r in reps} == {"ADB", "GRB", "RFR", "SR", "DWOA"}
        assert all(r.city == "Paris" and r.n_eval > 0 for r in reps)

    def test_missing_cache(self, tmp_path):
        with pytest.raises(MissingArtifact, match="fetch"):
            pipeline.cmd_train_source(small_config(tmp_path))


def test_cache_file_naming(tmp_path):
    cfg = small_config(tmp_path)
    path = cache_path(cfg.cache_dir, cfg.source, DateRange(dt.date(2003, 1, 1), dt.date(2003, 12, 31)))
    cache_store(path, [])
    assert path.name == "dhaka_20030101_20031231.csv"
