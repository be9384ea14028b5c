"""Water-balance derivation from pot weights.

Transpiration is the weight lost per day after crediting irrigation; FTSW
(fraction of transpirable soil water) is the remaining transpirable water
relative to the total transpirable water of the dry-down. The total is
anchored on an endpoint rule; the default takes the minimum observed weight
of the dry-down as the exhausted-reservoir weight, which needs no paired
control plant. Control plants are conventionally at FTSW = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, time as dtime

import numpy as np

from .errors import DegenerateControl, NonMonotoneTime, TooFewRecords, ZeroTtsw

MIN_WEIGHT = "min_weight"
FINAL_WEIGHT = "final_weight"


@dataclass
class WaterStatus:
    plant: object  # PlantId
    day: float
    weight: float         # g
    transpiration: float  # g/day over the interval starting this day
    atsw: float           # g
    ftsw: float           # in [0, 1]


@dataclass
class WaterSeries:
    plant: object
    ttsw: float  # g, total transpirable soil water
    statuses: list

    def ftsw_on(self, day):
        for status in self.statuses:
            if abs(status.day - day) < 0.5:
                return status.ftsw
        return None

    def transpiration_on(self, day):
        for status in self.statuses:
            if abs(status.day - day) < 0.5:
                return status.transpiration
        return None


def _check_order(records):
    if len(records) < 2:
        raise TooFewRecords(f"need >= 2 weight records, got {len(records)}")
    times = [r.time for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise NonMonotoneTime(
            f"weight timestamps not strictly increasing for {records[0].plant.label}"
        )


def resample_daily(records):
    """One record per calendar day (the last reading), with irrigation
    re-aggregated over the resampled intervals."""
    ordered = sorted(records, key=lambda r: r.time)
    out = []
    pending = 0.0
    for i, rec in enumerate(ordered):
        pending += rec.irrigation
        is_last_of_day = (
            i + 1 >= len(ordered) or ordered[i + 1].time.date() != rec.time.date()
        )
        if is_last_of_day:
            out.append(
                type(rec)(plant=rec.plant, time=rec.time, weight=rec.weight,
                          irrigation=pending)
            )
            pending = 0.0
    return out


def transpiration_series(weights, evaporation_per_day=0.0):
    """Per-interval transpiration, g/day, length n-1.

    T_i = max(0, (w_i + irrigation_(i->i+1) - w_(i+1)) / dt - evaporation).
    """
    _check_order(weights)
    rates = []
    for a, b in zip(weights, weights[1:]):
        dt = (b.time - a.time).total_seconds() / 86400.0
        rate = (a.weight + b.irrigation - b.weight) / dt - evaporation_per_day
        rates.append(max(0.0, rate))
    return np.array(rates)


def mass_balance_residual(weights, transpiration=None):
    """Sum(T * dt) - (w_start - w_end + sum irrigation); zero when no rate
    was clamped and no evaporation offset applied."""
    weights = sorted(weights, key=lambda r: r.time)
    if transpiration is None:
        transpiration = transpiration_series(weights)
    total = 0.0
    for rate, (a, b) in zip(transpiration, zip(weights, weights[1:])):
        total += rate * (b.time - a.time).total_seconds() / 86400.0
    expected = weights[0].weight - weights[-1].weight + sum(
        r.irrigation for r in weights[1:]
    )
    return total - expected


def compute_water_series(weights, start=None, endpoint_rule=MIN_WEIGHT,
                         evaporation_per_day=0.0):
    """Daily water status over a dry-down.

    `start` fixes day zero (defaults to the first record's date). The
    endpoint rule sets the exhausted-reservoir weight W_end: minimum observed
    weight (default) or the final weight of the series.
    """
    daily = resample_daily(weights)
    _check_order(daily)
    if start is None:
        start = daily[0].time.date()
    origin = datetime.combine(start, dtime.min)

    w = np.array([r.weight for r in daily])
    if endpoint_rule == MIN_WEIGHT:
        w_end = float(w.min())
    elif endpoint_rule == FINAL_WEIGHT:
        w_end = float(w[-1])
    else:
        raise ValueError(f"unknown endpoint rule {endpoint_rule!r}")
    ttsw = float(w[0]) - w_end
    if ttsw <= max(1e-9, 1e-6 * float(w[0])):
        raise ZeroTtsw(
            f"{daily[0].plant.label}: start weight {w[0]:.1f} g ~ end weight "
            f"{w_end:.1f} g; plant never dried"
        )

    rates = transpiration_series(daily, evaporation_per_day)
    statuses = []
    for i, rec in enumerate(daily):
        atsw = max(0.0, rec.weight - w_end)
        statuses.append(
            WaterStatus(
                plant=rec.plant,
                day=(rec.time - origin).total_seconds() / 86400.0,
                weight=rec.weight,
                transpiration=float(rates[i]) if i < len(rates) else 0.0,
                atsw=atsw,
                ftsw=float(np.clip(atsw / ttsw, 0.0, 1.0)),
            )
        )
    return WaterSeries(plant=daily[0].plant, ttsw=ttsw, statuses=statuses)


def normalized_daily_rate(stressed_value, control_values):
    """Stressed-plant rate divided by the same-day control mean."""
    control_values = np.asarray(control_values, dtype=float)
    if control_values.size < 1:
        raise DegenerateControl("no control values for normalization")
    mean = float(control_values.mean())
    if mean <= 0.0:
        raise DegenerateControl(f"non-positive control mean ({mean})")
    return float(stressed_value) / mean
