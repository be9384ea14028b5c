"""Model-evaluation metrics and comparison tables.

The metric set follows the usual crop-model conventions: rmse (mm^2),
rmse_rel (rmse divided by the mean observed area), bias (mean of
predicted - observed, so negative = under-prediction), and the
Nash-Sutcliffe modeling efficiency (1 = perfect, 0 = no better than
predicting the mean).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .area_model import ModelScope, fit_scoped, predict_linear
from .errors import DegenerateInput, DegenerateObserved, LengthMismatch

METRIC_COLUMNS = ("method", "n", "rmse", "rmse_rel", "bias", "efficiency")


@dataclass
class MetricSet:
    n: int
    rmse: float
    rmse_rel: float
    bias: float
    efficiency: float


def metrics(observed, predicted):
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise LengthMismatch(
            f"observed has {observed.shape[0]} values, predicted {predicted.shape[0]}"
        )
    n = observed.shape[0]
    if n < 2:
        raise LengthMismatch(f"need at least 2 values, got {n}")
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateObserved("observed values all equal; efficiency undefined")
    err = predicted - observed
    sse = float(np.sum(err**2))
    rmse = float(np.sqrt(sse / n))
    return MetricSet(
        n=n,
        rmse=rmse,
        rmse_rel=rmse / float(observed.mean()),
        bias=float(err.mean()),
        efficiency=1.0 - sse / ss_tot,
    )


def metrics_by_method(pairs, predictions_by_method):
    """One MetricSet row per method.

    `predictions_by_method` maps method name to a prediction sequence aligned
    with `pairs`; None/NaN entries mean the method did not score that pair
    (per-method n reflects this). Row order follows the mapping order.
    """
    observed = np.array([p.observed_area for p in pairs], dtype=float)
    rows = []
    for method, predictions in predictions_by_method.items():
        pred = np.array(
            [np.nan if v is None else float(v) for v in predictions], dtype=float
        )
        if pred.shape != observed.shape:
            raise LengthMismatch(
                f"method {method!r}: {pred.shape[0]} predictions for {observed.shape[0]} pairs"
            )
        mask = np.isfinite(pred)
        rows.append((method, metrics(observed[mask], pred[mask])))
    return rows


LOO_PLANT = "loo-plant"


def metrics_by_scope(pairs, scopes=None, predictors=None, cv=None):
    """Scale-comparison table: one row per modeling scope.

    cv=None evaluates in-sample (fit and score on all pairs); cv="loo-plant"
    refits per fold with one plant held out and pools out-of-fold predictions.
    """
    from .dataset import MANDATORY_FEATURES

    scopes = [ModelScope(s) for s in (scopes or list(ModelScope))]
    predictors = list(predictors or MANDATORY_FEATURES)
    pairs = list(pairs)
    rows = []
    for scope in sorted(scopes, key=lambda s: s.value):
        if cv is None:
            model_set = fit_scoped(pairs, scope, predictors)
            scored = [
                (p.observed_area, predict_linear(model_set.model_for(p.plant), p.features))
                for p in pairs
            ]
        elif cv == LOO_PLANT:
            scored = []
            plant_keys = sorted({p.plant.key for p in pairs})
            for key in plant_keys:
                train = [p for p in pairs if p.plant.key != key]
                test = [p for p in pairs if p.plant.key == key]
                model_set = fit_scoped(train, scope, predictors)
                scored.extend(
                    (p.observed_area, predict_linear(model_set.model_for(p.plant), p.features))
                    for p in test
                )
        else:
            raise ValueError(f"unknown cv scheme {cv!r}")
        observed, predicted = zip(*scored)
        rows.append((f"area_{scope.value}", metrics(observed, predicted)))
    return rows


def pearson_r(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape[0]} vs {y.shape[0]} values")
    if x.shape[0] < 3:
        raise DegenerateInput(f"need at least 3 points, got {x.shape[0]}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.sum(xc**2)))
    sy = float(np.sqrt(np.sum(yc**2)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("zero variance input")
    return float(np.dot(xc, yc) / (sx * sy))


def write_metric_table(rows, path, key_column="method"):
    """CSV with the fixed column order method/scope,n,rmse,rmse_rel,bias,efficiency."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow((key_column,) + METRIC_COLUMNS[1:])
        for name, m in rows:
            writer.writerow(
                [name, m.n, repr(m.rmse), repr(m.rmse_rel), repr(m.bias), repr(m.efficiency)]
            )
