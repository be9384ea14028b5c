"""End-to-end orchestration: from parsed experiments to tables and figures.

The full chain is: predict areas from image features, smooth into monotone
growth curves, derive water status from pot weights, normalize stressed daily
rates by same-genotype control means, and fit the threshold response per
genotype x process. Functions here are deliberately thin compositions of the
core modules so the CLI and the test suite share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import area_model, smoothing, water_balance
from .dataset import CONTROL, STRESSED, align_observations
from .errors import DrydownError, ZeroTtsw
from .evaluation import metrics
from .response_fit import LE, TR, ResponsePoint


def plant_day(experiment, when):
    """Integer experiment day for a timestamp or date."""
    return int(math.floor(experiment.day_of(when)))


def raw_predictions(experiment, predictor):
    """Per-plant daily raw predictions: plant key -> (days, values).

    `predictor` maps a FeatureRecord to an area; multiple images on the same
    day are reduced to their median prediction.
    """
    per_day = {}
    for record in experiment.features:
        day = plant_day(experiment, record.time)
        per_day.setdefault(record.plant.key, {}).setdefault(day, []).append(
            predictor(record)
        )
    out = {}
    for key, days in per_day.items():
        ordered = sorted(days)
        out[key] = (
            np.array(ordered, dtype=float),
            np.array([float(np.median(days[d])) for d in ordered]),
        )
    return out


def linear_predictor(model_set):
    def predict(record):
        model = model_set.model_for(record.plant)
        return area_model.predict_linear(model, record)
    return predict


def build_curves(experiment, predictions, lam=smoothing.AUTO):
    """Growth curves per plant from raw daily predictions."""
    plants = {p.key: p for p in experiment.plants}
    curves = {}
    for key, (days, values) in predictions.items():
        if len(days) < 4:
            continue
        curves[key] = smoothing.build_growth_curve(plants[key], days, values, lam)
    return curves


def manual_curves(experiment, lam=smoothing.AUTO):
    """Growth curves built from the manual area measurements themselves."""
    per_plant = {}
    for record in experiment.manual:
        day = plant_day(experiment, record.time)
        per_plant.setdefault(record.plant.key, {})[day] = record.total_area
    predictions = {
        key: (np.array(sorted(days), dtype=float),
              np.array([days[d] for d in sorted(days)]))
        for key, days in per_plant.items()
    }
    return build_curves(experiment, predictions, lam)


def curve_predictions_for_pairs(experiment, curves, pairs, column="monotone"):
    """Monotone-curve value at each pair's day (None when not covered)."""
    out = []
    for pair in pairs:
        curve = curves.get(pair.plant.key)
        value = None
        if curve is not None:
            value = smoothing.curve_value_at(curve, plant_day(experiment, pair.time), column)
        out.append(value)
    return out


def water_series_by_plant(experiment, endpoint_rule=water_balance.MIN_WEIGHT,
                          evaporation_per_day=0.0):
    """Water series for every stressed plant (controls stay at FTSW = 1)."""
    by_plant = {}
    for record in experiment.weights:
        by_plant.setdefault(record.plant.key, []).append(record)
    plants = {p.key: p for p in experiment.plants}

    series = {}
    for key, records in by_plant.items():
        plant = plants.get(key)
        if plant is None or plant.treatment != STRESSED:
            continue
        try:
            series[key] = water_balance.compute_water_series(
                records, start=experiment.start, endpoint_rule=endpoint_rule,
                evaporation_per_day=evaporation_per_day,
            )
        except (ZeroTtsw, DrydownError):
            continue
    return series


def control_transpiration(experiment):
    """(genotype, day) -> list of control transpiration rates, g/day."""
    by_plant = {}
    for record in experiment.weights:
        by_plant.setdefault(record.plant.key, []).append(record)
    plants = {p.key: p for p in experiment.plants}

    rates = {}
    for key, records in by_plant.items():
        plant = plants.get(key)
        if plant is None or plant.treatment != CONTROL:
            continue
        daily = water_balance.resample_daily(records)
        if len(daily) < 2:
            continue
        series = water_balance.transpiration_series(daily)
        for i, rate in enumerate(series):
            day = plant_day(experiment, daily[i].time)
            rates.setdefault((plant.genotype, day), []).append(float(rate))
    return rates


def _control_expansion(experiment, curves):
    """(genotype, day) -> list of control expansion rates from curves."""
    plants = {p.key: p for p in experiment.plants}
    rates = {}
    for key, curve in curves.items():
        plant = plants[key]
        if plant.treatment != CONTROL:
            continue
        for i, rate in enumerate(curve.expansion_rate):
            rates.setdefault((plant.genotype, int(curve.days[i])), []).append(float(rate))
    return rates


def expansion_points(experiment, curves, water):
    """LE response points: stressed daily expansion normalized by the
    same-day control mean, against the plant's FTSW that day."""
    control = _control_expansion(experiment, curves)
    plants = {p.key: p for p in experiment.plants}
    points = []
    for key, curve in curves.items():
        plant = plants[key]
        if plant.treatment != STRESSED:
            continue
        series = water.get(key)
        if series is None:
            continue
        for i, rate in enumerate(curve.expansion_rate):
            day = int(curve.days[i])
            ftsw = series.ftsw_on(day)
            control_rates = control.get((plant.genotype, day))
            if ftsw is None or not control_rates:
                continue
            mean_control = float(np.mean(control_rates))
            if mean_control <= 0.0:
                continue
            points.append(
                ResponsePoint(genotype=plant.genotype, process=LE, ftsw=ftsw,
                              y=float(rate) / mean_control, day=day, plant=plant)
            )
    return points


def transpiration_points(experiment, water):
    """TR response points from pot-weight transpiration."""
    control = control_transpiration(experiment)
    points = []
    for key, series in water.items():
        plant = series.plant
        for status in series.statuses[:-1]:
            control_rates = control.get((plant.genotype, int(status.day)))
            if not control_rates:
                continue
            mean_control = float(np.mean(control_rates))
            if mean_control <= 0.0:
                continue
            points.append(
                ResponsePoint(genotype=plant.genotype, process=TR, ftsw=status.ftsw,
                              y=status.transpiration / mean_control,
                              day=status.day, plant=plant)
            )
    return points


@dataclass
class PipelineResult:
    pairs: list
    alignment: object
    global_model: object
    curves: dict
    water: dict
    points: list = field(default_factory=list)


def run_image_pipeline(experiment, predictors=None, lam=smoothing.AUTO,
                       window_days=0.5, endpoint_rule=water_balance.MIN_WEIGHT,
                       evaporation_per_day=0.0):
    """Area model -> curves -> water -> response points, image method."""
    alignment = align_observations(experiment.features, experiment.manual, window_days)
    model_set = area_model.fit_scoped(
        alignment.pairs, area_model.ModelScope.GLOBAL,
        predictors or list(area_model.MANDATORY_FEATURES),
    )
    predictions = raw_predictions(experiment, linear_predictor(model_set))
    curves = build_curves(experiment, predictions, lam)
    water = water_series_by_plant(experiment, endpoint_rule, evaporation_per_day)
    points = expansion_points(experiment, curves, water)
    points += transpiration_points(experiment, water)
    return PipelineResult(
        pairs=alignment.pairs,
        alignment=alignment,
        global_model=model_set,
        curves=curves,
        water=water,
        points=points,
    )


def run_manual_pipeline(experiment, lam=smoothing.AUTO,
                        endpoint_rule=water_balance.MIN_WEIGHT,
                        evaporation_per_day=0.0):
    """Same response-point construction but with manual-area growth curves."""
    curves = manual_curves(experiment, lam)
    water = water_series_by_plant(experiment, endpoint_rule, evaporation_per_day)
    points = expansion_points(experiment, curves, water)
    points += transpiration_points(experiment, water)
    return PipelineResult(
        pairs=[], alignment=None, global_model=None,
        curves=curves, water=water, points=points,
    )


def holdout_evaluation(experiment, holdout_fraction=0.3, seed=0,
                       lam=smoothing.AUTO, window_days=0.5):
    """Held-out accuracy of the global-model + splines chain.

    Plants are split (not rows), the global OLS is fitted on training plants'
    pairs, test plants' daily predictions are smoothed into monotone curves,
    and those curves are scored against the test plants' manual areas.
    """
    alignment = align_observations(experiment.features, experiment.manual, window_days)
    pairs = alignment.pairs
    keys = sorted({p.plant.key for p in pairs})
    rng = np.random.default_rng(seed)
    shuffled = list(keys)
    rng.shuffle(shuffled)
    n_test = max(1, int(round(holdout_fraction * len(shuffled))))
    test_keys = set(shuffled[:n_test])

    train_pairs = [p for p in pairs if p.plant.key not in test_keys]
    test_pairs = [p for p in pairs if p.plant.key in test_keys]
    model_set = area_model.fit_scoped(train_pairs, area_model.ModelScope.GLOBAL)

    predictions = raw_predictions(experiment, linear_predictor(model_set))
    test_predictions = {k: v for k, v in predictions.items() if k in test_keys}
    curves = build_curves(experiment, test_predictions, lam)

    observed, predicted_raw, predicted_curve = [], [], []
    for pair in test_pairs:
        curve = curves.get(pair.plant.key)
        if curve is None:
            continue
        day = plant_day(experiment, pair.time)
        raw = smoothing.curve_value_at(curve, day, "raw")
        mono = smoothing.curve_value_at(curve, day, "monotone")
        if raw is None or mono is None:
            continue
        observed.append(pair.observed_area)
        predicted_raw.append(raw)
        predicted_curve.append(mono)

    return metrics(observed, predicted_curve), metrics(observed, predicted_raw)
