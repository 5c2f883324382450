"""Evaluation statistics, dataset funnel, and report exports.

Everything here is pure aggregation over estimate/truth pairs: mean
absolute error with both percent denominators, the one-sided IQR outlier
flag, a tie-corrected Kruskal-Wallis rank test (chi-squared p, optional
exact permutation p for tiny samples), a paired t-test, distribution
summaries, and the five-step dataset funnel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np
from scipy import stats as sps

from .errors import DegenerateGroups, DegeneratePairs, NoTruth, TooFewRows

FUNNEL_STEPS = (
    "ground_truth",
    "svi_available",
    "door_visible",
    "date_matched",
    "door_bottom_detected",
)

PERMUTATION_LIMIT = 12  # exact Kruskal-Wallis p only for total n <= this


@dataclass(frozen=True)
class EvaluationRow:
    """One house's estimate against ground truth."""

    house_id: str
    estimate_m: float
    truth_m: float
    error_m: float
    abs_error_m: float
    visibility: str = None
    is_outlier: bool = False

    @classmethod
    def make(cls, house_id, estimate_m, truth_m, visibility=None) -> "EvaluationRow":
        err = estimate_m - truth_m
        return cls(
            house_id=str(house_id),
            estimate_m=float(estimate_m),
            truth_m=float(truth_m),
            error_m=err,
            abs_error_m=abs(err),
            visibility=visibility,
        )


def mae(rows) -> dict:
    """Mean absolute error in meters and as a percentage.

    Two percent figures are returned because the denominator is ambiguous:
    ``percent`` averages per-house abs_error/truth ratios, while
    ``percent_of_mean_truth`` divides the meter MAE by the mean truth.
    """
    rows = [r for r in rows if r.truth_m is not None and math.isfinite(r.truth_m)]
    if not rows:
        raise NoTruth("no rows carry a ground-truth elevation")
    abs_errors = np.array([r.abs_error_m for r in rows])
    truths = np.array([r.truth_m for r in rows])
    if np.any(truths == 0):
        percent = float("nan")  # per-house ratio undefined at zero truth
    else:
        percent = float(np.mean(abs_errors / np.abs(truths)) * 100.0)
    mean_truth = float(np.mean(truths))
    return {
        "meters": float(np.mean(abs_errors)),
        "percent": percent,
        "percent_of_mean_truth": (
            float(np.mean(abs_errors) / abs(mean_truth) * 100.0) if mean_truth else float("nan")
        ),
        "n": len(rows),
    }


def flag_outliers(rows) -> list:
    """Flag rows whose abs_error exceeds Q3 + 1.5*IQR (one-sided fence)."""
    rows = list(rows)
    if len(rows) < 4:
        raise TooFewRows(f"need at least 4 rows to fence outliers, got {len(rows)}")
    abs_errors = np.array([r.abs_error_m for r in rows])
    q1, q3 = np.percentile(abs_errors, [25.0, 75.0])
    fence = q3 + 1.5 * (q3 - q1)
    return [replace(r, is_outlier=bool(r.abs_error_m > fence)) for r in rows]


def _h_statistic(values: np.ndarray, sizes) -> float:
    """Tie-corrected Kruskal-Wallis H for pooled values split by group sizes."""
    n = len(values)
    ranks = sps.rankdata(values)
    h = 0.0
    start = 0
    for size in sizes:
        r = ranks[start:start + size]
        h += r.sum() ** 2 / size
        start += size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(values, return_counts=True)
    correction = 1.0 - ((counts ** 3 - counts).sum()) / float(n ** 3 - n)
    if correction == 0.0:
        raise DegenerateGroups("all values identical; ranks carry no information")
    return h / correction


def kruskal_wallis(groups, permutation: bool = False) -> dict:
    """Kruskal-Wallis rank test across two or more groups.

    Returns the tie-corrected H statistic with a chi-squared (k-1 df)
    p-value; with ``permutation=True`` (total n <= 12) the p-value is the
    exact fraction of group relabelings with H at least as large.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise ValueError("need >= 2 non-empty groups")
    sizes = [len(g) for g in groups]
    pooled = np.concatenate(groups)
    if pooled.size < 3:
        raise ValueError("need at least 3 values in total")
    h = _h_statistic(pooled, sizes)
    if not permutation:
        return {"H": float(h), "p": float(sps.chi2.sf(h, len(groups) - 1)), "df": len(groups) - 1}
    if pooled.size > PERMUTATION_LIMIT:
        raise ValueError(
            f"exact permutation limited to n <= {PERMUTATION_LIMIT}, got {pooled.size}"
        )
    at_least = 0
    total = 0
    for assignment in _assignments(pooled.size, sizes):
        total += 1
        if _h_for_assignment(pooled, assignment, sizes) >= h - 1e-12:
            at_least += 1
    return {"H": float(h), "p": at_least / total, "df": len(groups) - 1, "permutations": total}


def _assignments(n, sizes):
    """All index partitions of range(n) into consecutive groups of the given sizes."""

    def rec(remaining, sizes_left):
        if not sizes_left:
            yield ()
            return
        k = sizes_left[0]
        for chosen in combinations(remaining, k):
            rest = tuple(i for i in remaining if i not in chosen)
            for tail in rec(rest, sizes_left[1:]):
                yield (chosen,) + tail

    yield from rec(tuple(range(n)), list(sizes))


def _h_for_assignment(pooled, assignment, sizes):
    arranged = np.concatenate([pooled[list(idx)] for idx in assignment])
    return _h_statistic(arranged, sizes)


def paired_t_test(series_a, series_b) -> dict:
    """Two-sided paired t-test on per-element differences."""
    a = np.asarray(series_a, dtype=np.float64)
    b = np.asarray(series_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if len(a) < 2:
        raise ValueError("need at least 2 pairs")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise DegeneratePairs("differences have zero variance")
    t = diff.mean() / (sd / math.sqrt(len(diff)))
    p = 2.0 * float(sps.t.sf(abs(t), len(diff) - 1))
    return {"t": float(t), "p": p, "df": len(diff) - 1}


def hdsl_distribution(values, thresholds=(0.305, 0.536)) -> dict:
    """Summary statistics plus fraction of values below each threshold."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least 1 value")
    pct = np.percentile(arr, [5, 25, 50, 75, 95])
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(np.median(arr)),
        "p5": float(pct[0]),
        "p25": float(pct[1]),
        "p75": float(pct[3]),
        "p95": float(pct[4]),
        "fraction_below": {
            f"{t:g}": float(np.mean(arr < t)) for t in thresholds
        },
    }


def funnel(records) -> list:
    """Count houses surviving each cumulative filter step.

    ``records`` holds one dict per house with a bool for each FUNNEL_STEPS
    key (missing keys count as False).  Step k's count is the number of
    houses passing steps 1..k, so counts are non-increasing by construction.
    """
    counts = []
    for i, step in enumerate(FUNNEL_STEPS):
        passing = sum(
            1
            for rec in records
            if all(bool(rec.get(s, False)) for s in FUNNEL_STEPS[: i + 1])
        )
        counts.append((step, passing))
    return counts


# ---------------------------------------------------------------------------
# plain-data exports


def write_histogram_svg(values, path, bins=20, title="", x_label="", width=640,
                        height=400) -> None:
    """Deterministic standalone SVG histogram (no plotting dependency)."""
    arr = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(arr, bins=bins)
    peak = max(int(counts.max()), 1) if counts.size else 1
    margin = 48
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>',
    ]
    for i, c in enumerate(counts):
        bar_h = plot_h * c / peak
        x = margin + plot_w * i / len(counts)
        parts.append(
            f'<rect x="{x:.2f}" y="{margin + plot_h - bar_h:.2f}" '
            f'width="{plot_w / len(counts) - 1:.2f}" height="{bar_h:.2f}" '
            f'fill="#4878a8"/>'
        )
    parts.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>'
    )
    for frac, value in ((0.0, edges[0] if counts.size else 0.0),
                        (1.0, edges[-1] if counts.size else 1.0)):
        x = margin + plot_w * frac
        parts.append(
            f'<text x="{x:.1f}" y="{margin + plot_h + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{value:.3g}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
