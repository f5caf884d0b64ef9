"""Paired comparisons, optimality gaps and normalized convergence curves."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm, rankdata

from .errors import InvalidObjectiveError

log = logging.getLogger(__name__)

EXACT_MAX_N = 25
ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class PairedComparison:
    diffs: np.ndarray
    w_statistic: float
    w_plus: float
    p_value: float
    n_effective: int
    method: str
    alternative: str = "two-sided"
    degenerate: bool = False


def _exact_tail(ranks: np.ndarray, w_plus: float) -> tuple[float, float]:
    """P(W+ <= w) and P(W+ >= w) under random signs, ties kept as half-ranks.

    Ranks are doubled so midranks become integers, then the null
    distribution of the sum is built by a subset-sum count.
    """
    r2 = np.rint(2 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in r2:
        counts[r:] = counts[r:] + counts[: total + 1 - r]
    denom = 2 ** len(r2)
    w2 = int(round(2 * w_plus))
    lower = sum(counts[: w2 + 1])
    upper = sum(counts[w2:])
    return float(lower) / denom, float(upper) / denom


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided", exact: bool | None = None) -> PairedComparison:
    """Wilcoxon signed-rank test on a - b.

    Zero differences are dropped, tied magnitudes get average ranks. The
    p-value is exact for up to 25 nonzero pairs and otherwise uses the
    normal approximation with tie and continuity corrections. "greater"
    tests whether a tends to exceed b.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("a and b must be equal-length, nonempty 1-d sequences")
    diffs = a - b
    d = diffs[diffs != 0]
    n = d.size
    if n == 0:
        return PairedComparison(diffs, 0.0, 0.0, 1.0, 0, "degenerate", alternative, degenerate=True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    use_exact = n <= EXACT_MAX_N if exact is None else exact
    if use_exact:
        p_le, p_ge = _exact_tail(ranks, w_plus)
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
        sd = math.sqrt(var) if var > 0 else 0.0
        if sd == 0.0:
            p_le = p_ge = 1.0
        else:
            p_le = float(norm.cdf((w_plus - mean + 0.5) / sd))
            p_ge = float(norm.sf((w_plus - mean - 0.5) / sd))
        method = "normal"
    if alternative == "two-sided":
        p = min(1.0, 2.0 * min(p_le, p_ge))
    elif alternative == "greater":
        p = p_ge
    else:
        p = p_le
    return PairedComparison(diffs, min(w_plus, w_minus), w_plus, float(min(max(p, 0.0), 1.0)), n, method, alternative)


def optimality_gap(found: float, opt: float) -> float:
    """Percent shortfall 100 (opt - found) / opt; a found value above opt warns and gives 0."""
    if not opt > 0:
        raise InvalidObjectiveError(f"optimum must be positive, got {opt}")
    if found > opt:
        log.warning("found objective %s exceeds the stated optimum %s", found, opt)
        return 0.0
    return 100.0 * (opt - found) / opt


def _step_values(xs, ys, grid):
    idx = np.searchsorted(np.asarray(xs), grid, side="right") - 1
    return np.asarray(ys, dtype=float)[idx]


def normalize_curves(traces, baseline) -> tuple[np.ndarray, np.ndarray]:
    """Mean over instances of trace / final baseline best, on a shared grid.

    ``traces[i]`` and ``baseline[i]`` belong to the same instance. The grid
    is the union of checkpoints from the point where every trace has one;
    values between checkpoints carry the last one forward.
    """
    if len(traces) != len(baseline) or not traces:
        raise ValueError("traces and baseline must be nonempty and matched per instance")
    ref = []
    for tr in baseline:
        y = tr.best_objective[-1]
        if not y > 0:
            raise InvalidObjectiveError(f"baseline final best must be positive, got {y}")
        ref.append(y)
    first = max(tr.constructions[0] for tr in traces)
    grid = np.unique(np.concatenate([np.asarray(tr.constructions) for tr in traces]))
    grid = grid[grid >= first]
    curves = np.array([_step_values(tr.constructions, tr.best_objective, grid) / y for tr, y in zip(traces, ref)])
    return grid, curves.mean(axis=0)


def write_curve_csv(path, grid, values) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["constructions", "normalized_objective"])
        for x, v in zip(grid, values):
            w.writerow([int(x), repr(float(v))])
    return path


def comparison_rows(results: dict, baseline: str, alpha: float = 0.05) -> list[dict]:
    """Summary rows: mean and std per config, Wilcoxon p against the baseline.

    ``results[name]`` is a sequence of per-instance values (already averaged
    over seeds) in a common instance order.
    """
    if baseline not in results:
        raise KeyError(f"baseline {baseline!r} not among {sorted(results)}")
    base = np.asarray(results[baseline], dtype=float)
    rows = []
    for name, vals in results.items():
        vals = np.asarray(vals, dtype=float)
        row = {"config": name, "mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
               "p_value": float("nan"), "better": False}
        if name != baseline:
            cmp = wilcoxon_signed_rank(vals, base)
            row["p_value"] = cmp.p_value
            row["better"] = bool(cmp.p_value < alpha and vals.mean() > base.mean())
        rows.append(row)
    return rows


def write_rows_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["config", "mean", "std", "p_value", "better"])
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def format_table(rows: list[dict]) -> str:
    """Plain-text table; significantly better rows carry a '*' marker."""
    head = f"{'config':<24}{'mean':>12}{'std':>10}{'p-value':>10}  "
    lines = [head, "-" * len(head)]
    for r in rows:
        p = "-" if math.isnan(r["p_value"]) else f"{r['p_value']:.3g}"
        mark = "*" if r["better"] else ""
        lines.append(f"{r['config']:<24}{r['mean']:>12.2f}{r['std']:>10.2f}{p:>10}  {mark}")
    return "\n".join(lines)
