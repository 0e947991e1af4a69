"""Error and correlation metrics, and side-by-side engine comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import RelcastError, UsageError
from ..sweep import Dataset
from .engines import RegressorSpec, TrainedModel, fit


@dataclass(frozen=True)
class MetricsReport:
    """MAE, MAX, RMSE, explained variance and R^2.

    ``ev`` and ``r2`` are NaN when the targets have zero variance.
    """

    mae: float
    max_abs: float
    rmse: float
    ev: float
    r2: float
    n: int = 0

    def as_dict(self) -> dict:
        return {"mae": self.mae, "max": self.max_abs, "rmse": self.rmse, "ev": self.ev, "r2": self.r2, "n": self.n}

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        return cls(float(d["mae"]), float(d["max"]), float(d["rmse"]), float(d["ev"]), float(d["r2"]), int(d.get("n", 0)))


def metrics(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    y = np.asarray(y_true, dtype=float)
    yhat = np.asarray(y_pred, dtype=float)
    if y.shape != yhat.shape:
        raise UsageError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise UsageError("cannot compute metrics on an empty set")
    e = y - yhat
    mae = float(np.mean(np.abs(e)))
    max_abs = float(np.max(np.abs(e)))
    rmse = float(math.sqrt(np.mean(e * e)))
    var_y = float(np.var(y))
    if var_y == 0.0:
        ev = r2 = math.nan
    else:
        ev = 1.0 - float(np.var(e)) / var_y
        r2 = 1.0 - float(np.sum(e * e)) / float(np.sum((y - y.mean()) ** 2))
    return MetricsReport(mae, max_abs, rmse, ev, r2, int(y.size))


def evaluate(model: TrainedModel, data: Dataset) -> MetricsReport:
    if not len(data):
        raise UsageError("cannot evaluate on an empty dataset")
    return metrics(data.y, model.predict(data.X))


@dataclass(frozen=True)
class ComparisonRow:
    engine: str
    dataset: str
    report: MetricsReport | None = None
    error: str | None = None


def compare_engines(specs: Sequence[RegressorSpec], train: Dataset, test: Dataset) -> list[ComparisonRow]:
    """Fit each spec on ``train``; report train and test metrics, one row each.

    A failing engine yields error rows instead of aborting the batch.
    """
    if not specs:
        raise UsageError("compare_engines needs at least one spec")
    rows = []
    for spec in specs:
        try:
            model = fit(spec, train)
        except RelcastError as exc:
            rows += [ComparisonRow(spec.label, "train", error=str(exc)), ComparisonRow(spec.label, "test", error=str(exc))]
            continue
        for name, data in (("train", train), ("test", test)):
            try:
                rows.append(ComparisonRow(spec.label, name, evaluate(model, data)))
            except RelcastError as exc:
                rows.append(ComparisonRow(spec.label, name, error=str(exc)))
    return rows


def _num(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    if x == 0:
        return "0"
    return f"{x:.4g}"


def metrics_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["engine", "dataset", "mae", "max", "rmse", "ev", "r2"])
    for r in rows:
        if r.report is None:
            w.writerow([r.engine, r.dataset, "", "", "", "", ""])
        else:
            m = r.report
            w.writerow([r.engine, r.dataset] + [repr(float(v)) for v in (m.mae, m.max_abs, m.rmse, m.ev, m.r2)])
    return buf.getvalue()


def metrics_table(rows: Sequence[ComparisonRow]) -> str:
    """Aligned text table: engine, data set, MAE, MAX, RMSE, EV, R2."""
    header = ["ML Model", "Data Set", "MAE", "MAX", "RMSE", "EV", "R2"]
    body = []
    errors = {}
    last = None
    for r in rows:
        name = r.engine if r.engine != last else ""
        last = r.engine
        if r.report is None:
            errors[len(body)] = f"error: {r.error}"
            body.append([name, r.dataset.capitalize()] + [""] * 5)
        else:
            m = r.report
            body.append([name, r.dataset.capitalize()] + [_num(v) for v in (m.mae, m.max_abs, m.rmse, m.ev, m.r2)])
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for i, row in enumerate([header] + body):
        cells = [c.ljust(w) for c, w in zip(row, widths)]
        err = errors.get(i - 1)
        if err:
            cells = cells[:2] + [err]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
