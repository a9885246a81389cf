"""Error metrics, before/after improvement rows, and comparison tables."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import AllExcluded, DimensionMismatch, EmptyInput

DEFAULT_EPS = 0.1  # mm/day; truths at or below this are left out of MAPE

# Fig. 2 legend order.
METHOD_ORDER = ("ADB", "GRB", "RFR", "SR", "DWOA", "DWA")
METHOD_NAMES = {
    "ADB": "Adaboost",
    "GRB": "Gradient Boosting Regressor",
    "RFR": "Random Forest Regressor",
    "SR": "Stacking Regressor",
    "DNN": "Deep Neural Network",
    "DWOA": "Deep learning WithOut Adaptation",
    "DWA": "Deep learning With Adaptation",
}


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"{pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise EmptyInput("no samples")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def mape(pred, truth, eps: float = DEFAULT_EPS) -> tuple[float, int]:
    """Mean absolute percentage error over samples with ``truth > eps``.

    Returns ``(percent, n_excluded)``.
    """
    pred, truth = _pair(pred, truth)
    keep = truth > eps
    if not keep.any():
        raise AllExcluded(f"no sample has truth above {eps}")
    err = 100.0 * np.abs(pred[keep] - truth[keep]) / truth[keep]
    return float(err.mean()), int((~keep).sum())


@dataclass(frozen=True)
class EvalReport:
    method: str
    city: str
    mse: float
    mae: float
    mape: float
    n_eval: int
    n_excluded_zero: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(method: str, city: str, pred, truth, eps: float = DEFAULT_EPS) -> EvalReport:
    pct, excluded = mape(pred, truth, eps)
    return EvalReport(method, city, mse(pred, truth), mae(pred, truth), pct, len(np.ravel(truth)), excluded)


@dataclass(frozen=True)
class ImprovementRow:
    city: str
    before_mape: float
    after_mape: float
    point_drop: float
    relative_drop: float

    def to_dict(self) -> dict:
        return asdict(self)


def improvement(before: float, after: float, city: str = "") -> ImprovementRow:
    if not before > 0:
        raise ValueError("before-adaptation MAPE must be positive")
    drop = before - after
    return ImprovementRow(city, before, after, drop, 100.0 * drop / before)


def _method_key(method: str) -> tuple[int, str]:
    return (METHOD_ORDER.index(method), "") if method in METHOD_ORDER else (len(METHOD_ORDER), method)


def order_reports(reports: Sequence[EvalReport]) -> list[EvalReport]:
    """Cities in first-seen order, methods in legend order (unknown methods last, by name)."""
    cities = list(dict.fromkeys(r.city for r in reports))
    return sorted(reports, key=lambda r: (cities.index(r.city), _method_key(r.method)))


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(header), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def render_comparison(reports: Sequence[EvalReport]) -> tuple[str, str]:
    """Aligned text table and ``city,method,mape`` CSV, one row per report."""
    if not reports:
        raise EmptyInput("no reports to render")
    ordered = order_reports(reports)
    text = _table(
        ("city", "method", "mape%", "mae", "mse", "n", "excluded"),
        [(r.city, r.method, f"{r.mape:.4f}", f"{r.mae:.4f}", f"{r.mse:.4f}", str(r.n_eval), str(r.n_excluded_zero))
         for r in ordered],
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("city", "method", "mape"))
    for r in ordered:
        w.writerow((r.city, r.method, f"{r.mape:.4f}"))
    return text, buf.getvalue()


def render_improvement(rows: Sequence[ImprovementRow]) -> tuple[str, str]:
    text = _table(
        ("city", "before_mape%", "after_mape%", "point_drop", "relative_drop%"),
        [(r.city, f"{r.before_mape:.4f}", f"{r.after_mape:.4f}", f"{r.point_drop:.4f}", f"{r.relative_drop:.2f}")
         for r in rows],
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("city", "before_mape", "after_mape", "point_drop", "relative_drop"))
    for r in rows:
        w.writerow((r.city, f"{r.before_mape:.4f}", f"{r.after_mape:.4f}", f"{r.point_drop:.4f}",
                    f"{r.relative_drop:.4f}"))
    return text, buf.getvalue()


def render_source_table(rows: Sequence[tuple[str, float, float]]) -> tuple[str, str]:
    """Source-domain comparison from ``(method code, test mse, test mae)`` rows."""
    text = _table(
        ("method", "mse", "mae"),
        [(METHOD_NAMES.get(m, m), f"{s:.4f}", f"{a:.4f}") for m, s, a in rows],
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "name", "mse", "mae"))
    for m, s, a in rows:
        w.writerow((m, METHOD_NAMES.get(m, m), f"{s:.6f}", f"{a:.6f}"))
    return text, buf.getvalue()


def read_comparison_csv(text: str) -> list[tuple[str, str, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["city", "method", "mape"]:
        raise ValueError("not a comparison CSV")
    return [(c, m, float(v)) for c, m, v in rows[1:]]
