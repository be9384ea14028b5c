"""Drought-response threshold fitting.

Each genotype x process (leaf expansion LE, plant transpiration TR) gets a
single threshold parameter `a` in the response curve

    y(a, ftsw) = -1 + 2 / (1 + exp(a * ftsw))

fitted by nonlinear least squares to (FTSW, normalized rate) points. For
a < 0 the curve rises from y(0) = 0 to just under 1 at ftsw = 1; a more
negative `a` means the plant keeps expanding/transpiring until the soil is
much drier (later adaptation). The solver is damped Gauss-Newton seeded by a
coarse grid scan, with a golden-section fallback on the same interval.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientOverlap,
    InsufficientSpan,
    NonConvergence,
    TooFewObservations,
)
from .evaluation import pearson_r

LE = "LE"
TR = "TR"

DEFAULT_BOUNDS = (-15.0, -0.5)
MIN_POINTS = 5
MIN_SPAN = 0.3


@dataclass(frozen=True)
class ResponsePoint:
    genotype: str
    process: str  # LE or TR
    ftsw: float
    y: float      # normalized rate; can exceed 1 with noise, never clamped
    day: float = 0.0
    plant: object = None


@dataclass
class ResponseFit:
    process: str
    genotype: str
    estimate: float
    se: float
    rmse: float
    n: int


def response_curve(a, ftsw):
    ftsw = np.asarray(ftsw, dtype=float)
    out = -1.0 + 2.0 / (1.0 + np.exp(a * ftsw))
    return float(out) if out.ndim == 0 else out


def response_curve_da(a, ftsw):
    """Analytic derivative of the response curve with respect to `a`."""
    ftsw = np.asarray(ftsw, dtype=float)
    e = np.exp(a * ftsw)
    out = -2.0 * ftsw * e / (1.0 + e) ** 2
    return float(out) if out.ndim == 0 else out


def _sse(a, ftsw, y):
    return float(np.sum((y - response_curve(a, ftsw)) ** 2))


def _golden_section(f, lo, hi, tol=1e-12, max_iter=200):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_threshold(points, bounds=DEFAULT_BOUNDS, max_iter=100, tol=1e-12):
    """Least-squares threshold estimate with linearized standard error."""
    points = list(points)
    n = len(points)
    if n < MIN_POINTS:
        raise TooFewObservations(f"need >= {MIN_POINTS} response points, got {n}")
    ftsw = np.array([p.ftsw for p in points])
    y = np.array([p.y for p in points])
    span = float(ftsw.max() - ftsw.min())
    if span < MIN_SPAN:
        raise InsufficientSpan(
            f"ftsw span {span:.3f} < {MIN_SPAN} for "
            f"{points[0].genotype}/{points[0].process}"
        )

    lo, hi = bounds
    grid = np.arange(lo, hi + 1e-9, 0.05)
    a = float(grid[np.argmin([_sse(g, ftsw, y) for g in grid])])

    sse = _sse(a, ftsw, y)
    converged = False
    for _ in range(max_iter):
        r = y - response_curve(a, ftsw)
        j = response_curve_da(a, ftsw)
        jtj = float(np.dot(j, j))
        if jtj == 0.0:
            break
        delta = float(np.dot(j, r)) / jtj
        step = delta
        improved = False
        for _ in range(40):  # damping: halve until the SSE decreases
            candidate = min(max(a + step, lo), hi)
            candidate_sse = _sse(candidate, ftsw, y)
            if candidate_sse <= sse:
                improved = candidate != a
                a, sse = candidate, candidate_sse
                break
            step /= 2.0
        if not improved or abs(step) < tol:
            converged = True
            break
    if not converged:
        a = min(max(_golden_section(lambda g: _sse(g, ftsw, y), lo, hi), lo), hi)
        sse = _sse(a, ftsw, y)
        if not np.isfinite(a):
            raise NonConvergence(a)

    rmse = math.sqrt(sse / (n - 1))
    grad_norm_sq = float(np.sum(response_curve_da(a, ftsw) ** 2))
    se = math.sqrt(rmse**2 / grad_norm_sq) if grad_norm_sq > 0 else float("inf")
    first = points[0]
    return ResponseFit(
        process=first.process,
        genotype=first.genotype,
        estimate=a,
        se=se,
        rmse=rmse,
        n=n,
    )


@dataclass
class FitAllResult:
    fits: list
    skipped: list  # (process, genotype, reason)


def fit_all(points, bounds=DEFAULT_BOUNDS):
    """One fit per (process, genotype) group; rows sorted by process, then
    estimate descending. Groups failing preconditions are reported, not fatal."""
    groups = {}
    for p in points:
        groups.setdefault((p.process, p.genotype), []).append(p)
    fits, skipped = [], []
    for (process, genotype), group in sorted(groups.items()):
        try:
            fits.append(fit_threshold(group, bounds))
        except (TooFewObservations, InsufficientSpan, NonConvergence) as err:
            skipped.append((process, genotype, str(err)))
    fits.sort(key=lambda f: (f.process, -f.estimate))
    return FitAllResult(fits=fits, skipped=skipped)


@dataclass
class MethodComparison:
    process: str
    r: float
    mean_difference: float  # mean(method B - method A)
    loo_r_min: float
    flagged_genotype: str  # genotype carrying the correlation, or None
    paired: list  # (genotype, estimate_a, estimate_b)

    def to_json_dict(self):
        return {
            "process": self.process,
            "r": self.r,
            "mean_difference": self.mean_difference,
            "loo_r_min": self.loo_r_min,
            "flagged_genotype": self.flagged_genotype,
            "paired": [
                {"genotype": g, "a": a, "b": b} for g, a, b in self.paired
            ],
        }


def compare_methods(fits_a, fits_b, loo_drop_threshold=0.3):
    """Per-process comparison of two parameter sets (e.g. manual vs image).

    The leave-one-genotype-out diagnostic flags a genotype whose removal
    drops the correlation by more than `loo_drop_threshold`: a sign the
    apparent agreement is carried by a single extreme genotype.
    """
    a_by_key = {(f.process, f.genotype): f.estimate for f in fits_a}
    b_by_key = {(f.process, f.genotype): f.estimate for f in fits_b}
    processes = sorted({k[0] for k in a_by_key} & {k[0] for k in b_by_key})

    reports = []
    for process in processes:
        genotypes = sorted(
            g for (p, g) in a_by_key if p == process and (process, g) in b_by_key
        )
        if len(genotypes) < 3:
            raise InsufficientOverlap(
                f"process {process}: only {len(genotypes)} shared genotypes"
            )
        va = np.array([a_by_key[(process, g)] for g in genotypes])
        vb = np.array([b_by_key[(process, g)] for g in genotypes])
        r = pearson_r(va, vb)

        loo_r_min, flagged = r, None
        if len(genotypes) >= 4:
            for i, genotype in enumerate(genotypes):
                mask = np.arange(len(genotypes)) != i
                r_without = pearson_r(va[mask], vb[mask])
                if r_without < loo_r_min:
                    loo_r_min = r_without
                    if r - r_without > loo_drop_threshold:
                        flagged = genotype
        reports.append(
            MethodComparison(
                process=process,
                r=r,
                mean_difference=float(np.mean(vb - va)),
                loo_r_min=loo_r_min,
                flagged_genotype=flagged,
                paired=[(g, float(a), float(b))
                        for g, a, b in zip(genotypes, va, vb)],
            )
        )
    return reports


RESPONSE_TABLE_COLUMNS = ("process", "genotype", "estimate", "se", "rmse", "n")


def write_response_table(fits, path):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESPONSE_TABLE_COLUMNS)
        for fit in fits:
            writer.writerow(
                [fit.process, fit.genotype, repr(fit.estimate), repr(fit.se),
                 repr(fit.rmse), fit.n]
            )


def read_response_table(path):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [
            ResponseFit(
                process=row["process"],
                genotype=row["genotype"],
                estimate=float(row["estimate"]),
                se=float(row["se"]),
                rmse=float(row["rmse"]),
                n=int(row["n"]),
            )
            for row in reader
        ]
