import datetime as dt
import json

import numpy as np
import pytest

from rainadapt.baselines import (
    TreeParams,
    default_stacking_members,
    fit_adaboost_r2,
    fit_forest,
    fit_gradient_boost,
    fit_stacking,
)
from rainadapt.checkpoint import load_checkpoint, save_checkpoint
from rainadapt.dataset import Dataset, Scaler
from rainadapt.errors import ParseError
from rainadapt.nn import MlpSpec, TrainConfig, backward, init_mlp, optimizer_step


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 4))
    y = X[:, 0] ** 2 + X[:, 1]
    return Dataset(X, y, tuple(("s", dt.date(2003, 1, 1) + dt.timedelta(days=i)) for i in range(120)))


def _same_predictions(a, b, X):
    return np.array_equal(a.predict(X), b.predict(X))


def test_mlp_round_trip_keeps_optimizer_state(tmp_path, data):
    m = init_mlp(MlpSpec(4, (5, 3), seed=2))
    m.reset_optimizer()
    grads, _ = backward(m, data.features[:8], data.targets[:8])
    optimizer_step(m, grads, TrainConfig())
    sc = Scaler(np.arange(4.0), np.ones(4) * 2)
    save_checkpoint(tmp_path / "m.npz", m, sc, {"seed": 2}, {"method": "DNN"})
    ck = load_checkpoint(tmp_path / "m.npz")
    assert ck.model.spec == m.spec and ck.model.t == 1
    assert all(np.array_equal(a, b) for a, b in zip(ck.model.params(), m.params()))
    assert all(np.array_equal(a, b) for a, b in zip(ck.model.m, m.m))
    assert np.array_equal(ck.scaler.mean, sc.mean)
    assert ck.config == {"seed": 2} and ck.extra == {"method": "DNN"}


@pytest.mark.parametrize("fit", [
    lambda d: fit_forest(d, 3, TreeParams(3, 5)),
    lambda d: fit_adaboost_r2(d, 4, TreeParams(2, 5)),
    lambda d: fit_gradient_boost(d, 5, 0.2, TreeParams(2, 5)),
    lambda d: fit_stacking(d, default_stacking_members(TreeParams(2, 5), 3, 3, 0.2), folds=3),
])
def test_ensemble_round_trip(tmp_path, data, fit):
    model = fit(data)
    save_checkpoint(tmp_path / "e.npz", model)
    back = load_checkpoint(tmp_path / "e.npz")
    assert back.scaler is None
    assert _same_predictions(model, back.model, data.features)


def test_rejects_foreign_npz(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.zeros(3))
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "x.npz")


def test_rejects_future_version(tmp_path, data):
    save_checkpoint(tmp_path / "m.npz", init_mlp(MlpSpec(4, (2, 2))))
    with np.load(tmp_path / "m.npz") as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays["__meta__"]))
    meta["version"] = 99
    arrays["__meta__"] = np.array(json.dumps(meta))
    np.savez(tmp_path / "m.npz", **arrays)
    with pytest.raises(ParseError, match="version"):
        load_checkpoint(tmp_path / "m.npz")


def test_unknown_model_type(tmp_path):
    with pytest.raises(TypeError):
        save_checkpoint(tmp_path / "x.npz", object())
    assert not list(tmp_path.iterdir())
