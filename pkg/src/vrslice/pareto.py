"""Pareto analysis of latency / bandwidth operating points.

Dominance is the strict conjunction: a point dominates another only if it
is strictly better in BOTH metrics. Ties therefore never dominate, so two
points sharing a latency (or bandwidth) value both stay on the frontier;
this follows the strict definition and is intentional.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ParetoPoint:
    """One operating point of a slicing scheme at a given target quantile."""

    p_s: float
    latency_s: float
    bandwidth_hz: float
    scheme: str = ""


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    """True iff a is strictly better than b in both latency and bandwidth."""
    return a.latency_s < b.latency_s and a.bandwidth_hz < b.bandwidth_hz


def pareto_frontier(points: Sequence[ParetoPoint]) -> list:
    """Non-dominated subset, sorted by latency then bandwidth."""
    pts = list(points)
    frontier = [
        p for p in pts
        if not any(dominates(q, p) for q in pts)
    ]
    return sorted(frontier, key=lambda p: (p.latency_s, p.bandwidth_hz))


def frontier_bandwidth_curve(frontier: Sequence[ParetoPoint]):
    """Monotone (latency -> best bandwidth) pairs for interpolation.

    Collapses duplicate latencies to their best bandwidth and enforces a
    non-increasing bandwidth envelope so the curve describes what the
    scheme can achieve at a latency budget.
    """
    best: dict = {}
    for p in frontier:
        if p.latency_s not in best or p.bandwidth_hz < best[p.latency_s]:
            best[p.latency_s] = p.bandwidth_hz
    lats = np.array(sorted(best))
    bws = np.array([best[l] for l in lats])
    bws = np.minimum.accumulate(bws)
    return lats, bws


def matched_latency_reduction(reference: Sequence[ParetoPoint],
                              improved: Sequence[ParetoPoint],
                              n_grid: int = 101) -> np.ndarray:
    """Relative bandwidth reduction of ``improved`` vs ``reference`` at equal
    latency, sampled over the overlapping latency range.

    Returns an array of 1 - B_improved / B_reference values (empty if the
    latency ranges do not overlap).
    """
    ref_l, ref_b = frontier_bandwidth_curve(pareto_frontier(reference))
    imp_l, imp_b = frontier_bandwidth_curve(pareto_frontier(improved))
    lo = max(ref_l.min(), imp_l.min())
    hi = min(ref_l.max(), imp_l.max())
    if hi <= lo:
        return np.empty(0)
    grid = np.linspace(lo, hi, n_grid)
    ref_at = np.interp(grid, ref_l, ref_b)
    imp_at = np.interp(grid, imp_l, imp_b)
    return 1.0 - imp_at / ref_at
