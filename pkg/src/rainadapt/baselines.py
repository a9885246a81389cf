"""CART regression trees and the ensembles built on them.

Every fit is a deterministic function of (data, params, seed). Split search
scans midpoints between consecutive distinct sorted values of every candidate
feature; ties go to the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset
from ._treegrow import grow, resample_order
from .errors import DimensionMismatch, InsufficientData, SingularMetaProblem

log = logging.getLogger(__name__)

# Relative slack when comparing candidate split errors; keeps tie-breaking
# stable against last-bit rounding differences.
SPLIT_RTOL = 1e-12
BETA_FLOOR = 1e-10
RIDGE = 1e-8
MAX_META_COND = 1e12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = 8
    min_samples_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")


@dataclass(eq=False)
class RegressionTree:
    """Flat array encoding; ``feature == -1`` marks a leaf. Left child takes ``x < threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    sse: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[rows, feat] < self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)


def _check_features(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(f"model expects {n_features} features, got shape {X.shape}")
    return X


def _build_tree(
    X: np.ndarray,
    y: np.ndarray,
    p: TreeParams,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    presorted: np.ndarray | None = None,
) -> RegressionTree:
    """Grow one tree; with ``max_features < d`` each split sees a random feature subset.

    Subsets come from one ``rng.random((max_internal_nodes, d))`` draw: the
    i-th node that tries to split uses the features with the smallest keys
    in row i. ``presorted`` (the stable column argsort of ``X.T``) may be
    passed when the same features are grown on repeatedly.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 2 * p.min_samples_leaf:
        raise InsufficientData(f"{n} rows cannot fill two leaves of {p.min_samples_leaf}")
    k = d if max_features is None else int(max_features)
    if not 1 <= k <= d:
        raise ValueError(f"max_features must lie in [1, {d}]")
    max_depth = n if p.max_depth is None else p.max_depth
    if k < d:
        if rng is None:
            raise ValueError("feature subsampling needs a random generator")
        max_internal = min(n, 2 ** min(max_depth, 30)) - 1
        keys = rng.random((max(max_internal, 1), d))
    else:
        keys = np.zeros((1, d))
    XT = np.ascontiguousarray(X.T)
    if presorted is None:
        order = np.argsort(XT, axis=1, kind="stable")
    else:
        order = presorted.copy()
    arrays = grow(XT, y, order, max_depth, p.min_samples_leaf, k, keys, SPLIT_RTOL)
    return RegressionTree(*arrays, d)


def fit_tree(ds: Dataset, p: TreeParams) -> RegressionTree:
    """Greedy CART fit minimizing the children's summed squared error."""
    return _build_tree(ds.features, ds.targets, p)


@dataclass(eq=False)
class EnsembleModel:
    variant: str  # forest | adaboost_r2 | gradient_boost | stacking
    members: list
    n_features: int
    weights: np.ndarray | None = None      # adaboost member weights ln(1/beta)
    shrinkage: float = 1.0                 # gradient boost
    init: float = 0.0                      # gradient boost initial constant
    meta_coef: np.ndarray | None = None    # stacking: intercept then member coefficients
    member_names: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.n_features)
        if self.variant == "forest":
            return np.mean([t.predict(X) for t in self.members], axis=0)
        if self.variant == "adaboost_r2":
            preds = np.column_stack([t.predict(X) for t in self.members])
            return weighted_median(preds, self.weights)
        if self.variant == "gradient_boost":
            out = np.full(X.shape[0], self.init)
            for t in self.members:
                out += self.shrinkage * t.predict(X)
            return out
        if self.variant == "stacking":
            P = np.column_stack([predict(mm, X) for mm in self.members])
            return self.meta_coef[0] + P @ self.meta_coef[1:]
        raise ValueError(f"unknown ensemble variant {self.variant!r}")


Model = RegressionTree | EnsembleModel


def predict(model: Model, features: np.ndarray) -> np.ndarray:
    return model.predict(features)


def _map(fn: Callable, items: Sequence, n_jobs: int) -> list:
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def fit_forest(
    ds: Dataset,
    n_trees: int = 100,
    p: TreeParams = TreeParams(),
    *,
    bootstrap: bool = True,
    max_features: int | str | None = "sqrt",
    n_jobs: int = 1,
) -> EnsembleModel:
    """Bagged trees with per-split feature subsampling.

    Tree ``t`` uses ``default_rng(p.seed + t)`` for its bootstrap draw and
    then for its feature subsets, so results do not depend on ``n_jobs``.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    X, y = ds.features, ds.targets
    n, d = X.shape
    if max_features == "sqrt":
        k = max(1, int(math.sqrt(d)))
    elif max_features is None:
        k = d
    else:
        k = int(max_features)

    presorted = np.argsort(X.T, axis=1, kind="stable")

    def one(t: int) -> RegressionTree:
        rng = np.random.default_rng(p.seed + t)
        if not bootstrap:
            return _build_tree(X, y, p, k, rng, presorted)
        idx = np.sort(rng.integers(0, n, size=n))
        order = resample_order(presorted, np.bincount(idx, minlength=n))
        return _build_tree(X[idx], y[idx], p, k, rng, order)

    trees = _map(one, range(n_trees), n_jobs)
    return EnsembleModel("forest", trees, d, info={"n_trees": n_trees, "bootstrap": bootstrap, "max_features": k})


def weighted_median(preds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise weighted median: smallest value whose cumulative weight reaches half the total."""
    preds = np.atleast_2d(preds)
    order = np.argsort(preds, axis=1, kind="stable")
    cum = np.cumsum(np.asarray(weights)[order], axis=1)
    pick = np.argmax(cum >= 0.5 * cum[:, -1:], axis=1)
    return np.take_along_axis(preds, order, axis=1)[np.arange(preds.shape[0]), pick]


def fit_adaboost_r2(ds: Dataset, n_rounds: int = 100, p: TreeParams = TreeParams()) -> EnsembleModel:
    """AdaBoost.R2 with linear loss.

    Round ``k`` resamples ``n`` rows with ``default_rng(p.seed + k).choice(n, n, p=w)``,
    fits a tree, and scores the loss ``|err| / max|err|`` on all rows. With
    average loss ``L``, ``beta = L / (1 - L)`` (floored at 1e-10), the member
    weight is ``ln(1 / beta)`` and sample weights become ``w * beta**(1 - loss)``,
    renormalized. A round with ``L >= 0.5`` ends boosting and is discarded
    unless it is the first (then it is kept with weight 1). A perfect round
    (``L == 0``) is kept and ends boosting.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    X, y = ds.features, ds.targets
    n, d = X.shape
    if n < 2 * p.min_samples_leaf:
        raise InsufficientData(f"{n} rows cannot fill two leaves of {p.min_samples_leaf}")
    w = np.full(n, 1.0 / n)
    members, alphas, history = [], [], []
    presorted = np.argsort(X.T, axis=1, kind="stable")
    for k in range(n_rounds):
        rng = np.random.default_rng(p.seed + k)
        idx = np.sort(rng.choice(n, size=n, p=w))
        order = resample_order(presorted, np.bincount(idx, minlength=n))
        tree = _build_tree(X[idx], y[idx], p, presorted=order)
        err = np.abs(tree.predict(X) - y)
        top = err.max()
        loss = err / top if top > 0 else np.zeros(n)
        avg = float(w @ loss)
        if avg >= 0.5:
            if not members:
                members.append(tree)
                alphas.append(1.0)
            history.append({"avg_loss": avg, "beta": None, "weights": w.copy(), "stopped": "loss"})
            break
        beta = max(avg / (1.0 - avg), BETA_FLOOR)
        members.append(tree)
        alphas.append(math.log(1.0 / beta))
        if avg <= 0.0:
            history.append({"avg_loss": avg, "beta": beta, "weights": w.copy(), "stopped": "perfect"})
            break
        w = w * beta ** (1.0 - loss)
        w /= w.sum()
        history.append({"avg_loss": avg, "beta": beta, "weights": w.copy(), "stopped": None})
    return EnsembleModel("adaboost_r2", members, d, weights=np.array(alphas), info={"history": history})


def fit_gradient_boost(
    ds: Dataset, n_rounds: int = 100, shrinkage: float = 0.1, p: TreeParams = TreeParams()
) -> EnsembleModel:
    """Squared-error boosting: start at the target mean, add ``shrinkage * tree`` fit to residuals."""
    if n_rounds < 0:
        raise ValueError("n_rounds must be non-negative")
    if not 0.0 < shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in (0, 1]")
    X, y = ds.features, ds.targets
    n, d = X.shape
    if n < 2 * p.min_samples_leaf:
        raise InsufficientData(f"{n} rows cannot fill two leaves of {p.min_samples_leaf}")
    init = float(y.mean())
    F = np.full(n, init)
    trees, train_mse = [], [float(np.mean((y - F) ** 2))]
    presorted = np.argsort(X.T, axis=1, kind="stable")
    for _ in range(n_rounds):
        tree = _build_tree(X, y - F, p, presorted=presorted)
        F = F + shrinkage * tree.predict(X)
        trees.append(tree)
        train_mse.append(float(np.mean((y - F) ** 2)))
    return EnsembleModel("gradient_boost", trees, d, shrinkage=shrinkage, init=init,
                         info={"train_mse": train_mse})


def solve_meta(P: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """OLS with intercept through the normal equations; ridge 1e-8 when singular.

    Returns ``(coef, ridge_used)`` with ``coef[0]`` the intercept.
    """
    A = np.column_stack([np.ones(P.shape[0]), P])
    AtA = A.T @ A
    Aty = A.T @ y
    if np.linalg.cond(AtA) < MAX_META_COND:
        try:
            coef = np.linalg.solve(AtA, Aty)
            if np.all(np.isfinite(coef)):
                return coef, False
        except np.linalg.LinAlgError:
            pass
    try:
        coef = np.linalg.solve(AtA + RIDGE * np.eye(AtA.shape[0]), Aty)
    except np.linalg.LinAlgError:
        raise SingularMetaProblem("meta normal equations singular even with ridge") from None
    if not np.all(np.isfinite(coef)):
        raise SingularMetaProblem("meta coefficients not finite")
    return coef, True


# A stacking member: (name, fit(dataset, seed) -> model)
MemberFit = tuple[str, Callable[[Dataset, int], Model]]


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def fit_stacking(
    ds: Dataset, members: Sequence[MemberFit], folds: int = 5, seed: int = 0, n_jobs: int = 1
) -> EnsembleModel:
    """Out-of-fold stacking with an OLS meta-learner.

    Member ``m`` is always fit with seed ``seed + m``. Folds come from one
    ``default_rng(seed)`` permutation split into near-equal parts.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if len(members) < 2:
        raise ValueError("stacking needs at least 2 members")
    n, d = ds.features.shape
    if n < folds:
        raise InsufficientData(f"{n} rows cannot form {folds} folds")
    parts = fold_indices(n, folds, seed)
    oof = np.empty((n, len(members)))

    def fold_job(job: tuple[int, int]) -> tuple[int, int, np.ndarray]:
        mi, k = job
        test = parts[k]
        train = np.concatenate([parts[j] for j in range(folds) if j != k])
        model = members[mi][1](ds.take(train), seed + mi)
        return mi, k, predict(model, ds.features[test])

    jobs = [(mi, k) for mi in range(len(members)) for k in range(folds)]
    for mi, k, pred in _map(fold_job, jobs, n_jobs):
        oof[parts[k], mi] = pred

    coef, ridge = solve_meta(oof, ds.targets)
    full = _map(lambda mi: members[mi][1](ds, seed + mi), list(range(len(members))), n_jobs)
    oof_mse = [float(np.mean((oof[:, j] - ds.targets) ** 2)) for j in range(len(members))]
    meta_pred = coef[0] + oof @ coef[1:]
    return EnsembleModel(
        "stacking", full, d, meta_coef=coef, member_names=[m[0] for m in members],
        info={"ridge_used": ridge, "oof_mse": oof_mse,
              "meta_oof_mse": float(np.mean((meta_pred - ds.targets) ** 2))},
    )


def default_stacking_members(p: TreeParams, n_trees: int, n_rounds: int, shrinkage: float) -> list[MemberFit]:
    """Tree, forest and gradient boosting members sharing one set of tree params."""

    def with_seed(seed: int) -> TreeParams:
        return TreeParams(p.max_depth, p.min_samples_leaf, seed)

    return [
        ("tree", lambda ds, s: fit_tree(ds, with_seed(s))),
        ("forest", lambda ds, s: fit_forest(ds, n_trees, with_seed(s))),
        ("gradient_boost", lambda ds, s: fit_gradient_boost(ds, n_rounds, shrinkage, with_seed(s))),
    ]
