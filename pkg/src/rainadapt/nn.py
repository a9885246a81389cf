"""Two-hidden-layer ReLU regressor with hand-written backprop and Adam.

Source training minimizes plain MSE. Adaptation minimizes
``lambda1 * mse(source batch) + lambda2 * mse(target batch)`` with one batch
from each domain per step.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dataset import Dataset
from .errors import DimensionMismatch, EmptyInput, NonFiniteGradient

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int = 15
    hidden_dims: tuple[int, int] = (64, 32)
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if len(self.hidden_dims) != 2:
            raise ValueError("exactly two hidden layers are supported")
        if self.input_dim < 1 or min(self.hidden_dims) < 1:
            raise ValueError("layer sizes must be at least 1")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per layer."""
        h1, h2 = self.hidden_dims
        return [(h1, self.input_dim), (h2, h1), (1, h2)]


@dataclass(eq=False)
class Mlp:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # Adam first/second moments, ordered like params().
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    def params(self) -> list[np.ndarray]:
        """W1, b1, W2, b2, W3, b3 (live references)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def reset_optimizer(self) -> None:
        self.m = [np.zeros_like(p) for p in self.params()]
        self.v = [np.zeros_like(p) for p in self.params()]
        self.t = 0

    def copy(self) -> Mlp:
        return copy.deepcopy(self)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [0, max_epochs]")


@dataclass(frozen=True)
class AdaptationConfig:
    lambda1: float = 0.5
    lambda2: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)
    reinit: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.lambda1 + self.lambda2 > 0:
            raise ValueError("lambda1 + lambda2 must be positive")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    l_src: float
    l_tgt: float | None
    l_total: float
    val: float


@dataclass
class TrainReport:
    trace: list[EpochLog]
    best_epoch: int
    final_val_loss: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "final_val_loss": self.final_val_loss,
            "config": self.config,
            "trace": [vars(e) for e in self.trace],
        }


def init_mlp(spec: MlpSpec) -> Mlp:
    """He-uniform weights (bound sqrt(6 / fan_in)) drawn layer by layer; zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_out, fan_in in spec.layer_dims:
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    m = Mlp(spec, weights, biases)
    m.reset_optimizer()
    return m


def _as_batch(m: Mlp, x: np.ndarray) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m.spec.input_dim:
        raise DimensionMismatch(f"expected {m.spec.input_dim} features, got shape {np.shape(x)}")
    return X


def _forward_cache(m: Mlp, X: np.ndarray):
    (W1, W2, W3), (b1, b2, b3) = m.weights, m.biases
    z1 = X @ W1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ W2.T + b2
    a2 = np.maximum(z2, 0.0)
    out = (a2 @ W3.T + b3)[:, 0]
    return out, (z1, a1, z2, a2)


def forward(m: Mlp, x: np.ndarray) -> np.ndarray | float:
    """Predict for one feature vector (returns a float) or a batch of rows."""
    single = np.ndim(x) == 1
    out, _ = _forward_cache(m, _as_batch(m, x))
    return float(out[0]) if single else out


def mse_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"{pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise EmptyInput("mse of empty vectors")
    r = pred - truth
    return float(r @ r / r.size)


def backward(
    m: Mlp,
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray | None = None,
) -> tuple[list[np.ndarray], float]:
    """Gradients of ``sum_i w_i (pred_i - y_i)^2`` for every parameter, plus the loss.

    With the default ``w_i = 1/N`` this is the batch MSE. Gradients come back
    in ``Mlp.params()`` order.
    """
    X = _as_batch(m, X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise EmptyInput("empty batch")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows vs {y.shape[0]} targets")
    w = np.full(y.shape[0], 1.0 / y.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)

    # Overflow shows up as non-finite gradients, which optimizer_step rejects.
    with np.errstate(over="ignore", invalid="ignore"):
        out, (z1, a1, z2, a2) = _forward_cache(m, X)
        r = out - y
        loss = float(np.sum(w * r * r))
        d_out = 2.0 * w * r                         # (N,)
        W1, W2, W3 = m.weights

        gW3 = d_out[None, :] @ a2                   # (1, h2)
        gb3 = np.array([d_out.sum()])
        d_z2 = np.outer(d_out, W3[0]) * (z2 > 0)    # (N, h2)
        gW2 = d_z2.T @ a1
        gb2 = d_z2.sum(axis=0)
        d_z1 = (d_z2 @ W2) * (z1 > 0)
        gW1 = d_z1.T @ X
        gb1 = d_z1.sum(axis=0)
    return [gW1, gb1, gW2, gb2, gW3, gb3], loss


def optimizer_step(m: Mlp, grads: list[np.ndarray], cfg: TrainConfig) -> Mlp:
    """One bias-corrected Adam update, applied in place."""
    params = m.params()
    if len(grads) != len(params) or len(m.m) != len(params):
        raise DimensionMismatch("gradient/moment lists do not match parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")
    m.t += 1
    c1 = 1.0 - BETA1 ** m.t
    c2 = 1.0 - BETA2 ** m.t
    for p, g, mom, vel in zip(params, grads, m.m, m.v):
        if g.shape != p.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} vs parameter {p.shape}")
        mom *= BETA1
        mom += (1.0 - BETA1) * g
        vel *= BETA2
        vel += (1.0 - BETA2) * g * g
        p -= cfg.learning_rate * (mom / c1) / (np.sqrt(vel / c2) + ADAM_EPS)
    return m


def batch_indices(n: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Endless stream of mini-batches: a fresh permutation per pass, last batch may be short."""
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(n)
        for s in range(0, n, batch_size):
            yield perm[s:s + batch_size]


def _check_ready(ds: Dataset, m: Mlp, what: str) -> None:
    if len(ds) == 0:
        raise EmptyInput(f"{what} dataset is empty")
    if ds.n_features != m.spec.input_dim:
        raise DimensionMismatch(f"{what} has {ds.n_features} features, network expects {m.spec.input_dim}")


class _EarlyStopper:
    def __init__(self, m: Mlp, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.best_model = m.copy()

    def update(self, epoch: int, val: float, m: Mlp) -> bool:
        """Record this epoch; return True when training should stop."""
        if val < self.best:
            self.best, self.best_epoch = val, epoch
            self.best_model = m.copy()
        return epoch - self.best_epoch >= self.patience


def train_source(m: Mlp, train: Dataset, val: Dataset, cfg: TrainConfig) -> tuple[Mlp, TrainReport]:
    """Mini-batch Adam on train MSE with early stopping on validation MSE.

    Works on a copy; the optimizer state starts fresh. Batches come from
    ``batch_indices(len(train), batch_size, seed)``, one pass per epoch.
    """
    _check_ready(train, m, "train")
    _check_ready(val, m, "validation")
    m = m.copy()
    m.reset_optimizer()
    X, y = train.features, train.targets
    batches = batch_indices(len(train), cfg.batch_size, cfg.seed)
    steps = math.ceil(len(train) / cfg.batch_size)
    stopper = _EarlyStopper(m, cfg.patience)
    trace = []
    for epoch in range(1, cfg.max_epochs + 1):
        for _ in range(steps):
            idx = next(batches)
            grads, _ = backward(m, X[idx], y[idx])
            optimizer_step(m, grads, cfg)
        l_src = mse_loss(forward(m, X), y)
        v = mse_loss(forward(m, val.features), val.targets)
        trace.append(EpochLog(epoch, l_src, None, l_src, v))
        if stopper.update(epoch, v, m):
            break
    log.info("source training stopped at epoch %d (best %d, val mse %.4f)", epoch, stopper.best_epoch, stopper.best)
    final = stopper.best_model if cfg.restore_best else m
    report = TrainReport(trace, stopper.best_epoch, stopper.best, {"train": vars(cfg)})
    return final, report


def joint_gradients(
    m: Mlp, Xs: np.ndarray, ys: np.ndarray, Xt: np.ndarray, yt: np.ndarray,
    lambda1: float, lambda2: float,
) -> tuple[list[np.ndarray], float, float]:
    """Gradient of ``lambda1 * mse_src + lambda2 * mse_tgt`` and the two batch losses."""
    gs, ls = backward(m, Xs, ys)
    gt, lt = backward(m, Xt, yt)
    return [lambda1 * a + lambda2 * b for a, b in zip(gs, gt)], ls, lt


def adapt(m: Mlp, src_train: Dataset, tgt_adapt: Dataset, cfg: AdaptationConfig) -> tuple[Mlp, TrainReport]:
    """Continue training on the weighted joint source/target loss.

    Each step pairs one source batch with one target batch, drawn from
    independent cyclic samplers seeded ``seed`` and ``seed + 1``. An epoch is
    one pass over the target adaptation split. Early stopping watches the
    target adaptation MSE. With ``cfg.reinit`` the network restarts from
    ``init_mlp(m.spec)`` instead of the source weights.
    """
    tc = cfg.train
    _check_ready(src_train, m, "source")
    _check_ready(tgt_adapt, m, "target")
    m = init_mlp(m.spec) if cfg.reinit else m.copy()
    m.reset_optimizer()
    Xs, ys = src_train.features, src_train.targets
    Xt, yt = tgt_adapt.features, tgt_adapt.targets
    src_batches = batch_indices(len(src_train), tc.batch_size, tc.seed)
    tgt_batches = batch_indices(len(tgt_adapt), tc.batch_size, tc.seed + 1)
    steps = math.ceil(len(tgt_adapt) / tc.batch_size)
    stopper = _EarlyStopper(m, tc.patience)
    trace = []
    for epoch in range(1, tc.max_epochs + 1):
        for _ in range(steps):
            i, j = next(src_batches), next(tgt_batches)
            grads, _, _ = joint_gradients(m, Xs[i], ys[i], Xt[j], yt[j], cfg.lambda1, cfg.lambda2)
            optimizer_step(m, grads, tc)
        l_src = mse_loss(forward(m, Xs), ys)
        l_tgt = mse_loss(forward(m, Xt), yt)
        total = cfg.lambda1 * l_src + cfg.lambda2 * l_tgt
        trace.append(EpochLog(epoch, l_src, l_tgt, total, l_tgt))
        if stopper.update(epoch, l_tgt, m):
            break
    log.info("adaptation stopped at epoch %d (best %d, target mse %.4f)", epoch, stopper.best_epoch, stopper.best)
    final = stopper.best_model if tc.restore_best else m
    report = TrainReport(
        trace, stopper.best_epoch, stopper.best,
        {"lambda1": cfg.lambda1, "lambda2": cfg.lambda2, "reinit": cfg.reinit, "train": vars(tc)},
    )
    return final, report
