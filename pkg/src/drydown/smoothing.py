"""Growth-curve post-processing.

Raw daily area predictions are not monotone in time, which breaks the daily
expansion-rate computation downstream. The fix is a three-step chain:

1. natural cubic smoothing spline (penalized least squares, lambda by GCV),
2. isotonic projection onto non-decreasing sequences (pool adjacent violators),
3. clamp of negative areas to zero.

The spline solve uses the banded Reinsch formulation: with Q and R the
second-difference and penalty matrices of Green & Silverman, the fitted values
are f = v - lambda * Q gamma where (R + lambda Q'Q) gamma = Q'v. This is
stable at both extremes (lambda=0 interpolates, lambda->inf tends to the
least-squares straight line).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonIncreasingDays, TooFewPoints

AUTO = "auto"


@dataclass
class GrowthCurve:
    plant: object  # PlantId
    days: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray
    monotone: np.ndarray
    expansion_rate: np.ndarray  # mm^2/day, length n-1


def _penalty_matrices(days):
    """Q (n x n-2) and R (n-2 x n-2) such that gamma'R gamma is the integrated
    squared second derivative of the natural cubic interpolant."""
    h = np.diff(days)
    n = len(days)
    q = np.zeros((n, n - 2))
    r = np.zeros((n - 2, n - 2))
    for i in range(n - 2):
        q[i, i] = 1.0 / h[i]
        q[i + 1, i] = -(1.0 / h[i] + 1.0 / h[i + 1])
        q[i + 2, i] = 1.0 / h[i + 1]
        r[i, i] = (h[i] + h[i + 1]) / 3.0
        if i + 1 < n - 2:
            r[i, i + 1] = r[i + 1, i] = h[i + 1] / 6.0
    return q, r


def _spline_solve(q, r, values, lam):
    if lam == 0.0:
        return values.copy(), 0.0
    m = r + lam * (q.T @ q)
    gamma = np.linalg.solve(m, q.T @ values)
    fitted = values - lam * (q @ gamma)
    # effective residual degrees of freedom tr(I - A) = lam * tr(M^-1 Q'Q)
    df_res = lam * np.trace(np.linalg.solve(m, q.T @ q))
    return fitted, df_res


def _gcv_lambda(q, r, values, grid):
    n = len(values)
    best_lam, best_score = grid[0], np.inf
    for lam in grid:
        fitted, df_res = _spline_solve(q, r, values, lam)
        if df_res <= 1e-10:
            continue
        rss = float(np.sum((values - fitted) ** 2))
        score = n * rss / df_res**2
        if score < best_score:
            best_lam, best_score = lam, score
    return best_lam


def smooth_series(days, values, lam=AUTO):
    """Natural cubic smoothing spline evaluated at the input days.

    `lam` is the roughness penalty weight; AUTO picks it by generalized
    cross-validation over a log-spaced grid. lam=0 interpolates; very large
    lam recovers the least-squares straight line.
    """
    days = np.asarray(days, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(days) < 4:
        raise TooFewPoints(f"need >= 4 points for spline smoothing, got {len(days)}")
    if np.any(np.diff(days) <= 0):
        raise NonIncreasingDays("days must be strictly increasing")
    if len(days) != len(values):
        raise TooFewPoints("days and values must have the same length")

    q, r = _penalty_matrices(days)
    if lam == AUTO or lam is None:
        lam = _gcv_lambda(q, r, values, np.logspace(-8, 10, 73))
    elif lam < 0:
        raise ValueError("lambda must be >= 0")
    fitted, _ = _spline_solve(q, r, values, float(lam))
    return fitted


def enforce_monotone(values):
    """L2-closest non-decreasing sequence (pool adjacent violators), with
    negative values clamped to zero afterwards."""
    values = np.asarray(values, dtype=float)
    # blocks of (mean, weight) merged while out of order
    means, weights = [], []
    for v in values:
        means.append(v)
        weights.append(1.0)
        while len(means) > 1 and means[-2] > means[-1]:
            w = weights[-2] + weights[-1]
            m = (means[-2] * weights[-2] + means[-1] * weights[-1]) / w
            means[-2:] = [m]
            weights[-2:] = [w]
    out = np.repeat(means, np.array(weights, dtype=int))
    return np.maximum(out, 0.0)


def build_growth_curve(plant, days, raw_predictions, lam=AUTO):
    """Full chain: smooth, project to non-decreasing, derive daily rates."""
    days = np.asarray(days, dtype=float)
    raw = np.asarray(raw_predictions, dtype=float)
    smoothed = smooth_series(days, raw, lam)
    monotone = enforce_monotone(smoothed)
    rate = np.diff(monotone) / np.diff(days)
    curve = GrowthCurve(
        plant=plant,
        days=days,
        raw=raw,
        smoothed=smoothed,
        monotone=monotone,
        expansion_rate=rate,
    )
    return curve


def curve_value_at(curve, day, column="monotone"):
    """Curve value at an exact sampled day, or None if that day is absent."""
    series = getattr(curve, column)
    hits = np.nonzero(np.isclose(curve.days, day))[0]
    if hits.size == 0:
        return None
    return float(series[hits[0]])
