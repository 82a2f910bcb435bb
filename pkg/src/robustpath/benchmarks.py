"""Benchmark path-share generators: uniform, capacity-based and status quo."""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from .model import DemandMatrix, Incident, PathShares, RecommendationIndex, Scenario, ValidationError
from .simulator import compile_network, simulate

log = logging.getLogger(__name__)


def uniform_shares(index: RecommendationIndex) -> PathShares:
    return PathShares.normalized(np.ones(len(index.F)), index)


def _capacity_window(index: RecommendationIndex, h: int) -> tuple[int, int]:
    # h_0 is a time point; its passengers see the same departures as h_1
    lo, hi = index.interval(max(h, 1))
    return lo, hi


def available_capacity(scenario: Scenario, incident: Incident | None, index: RecommendationIndex,
                       baseline_demand: DemandMatrix, seed: int = 0,
                       shares: PathShares | None = None) -> np.ndarray:
    """Per F position: sum over runs leaving the path's first boarding platform within
    the interval of max(0, capacity - onboard on arrival), from one baseline run."""
    net = compile_network(scenario, incident)
    rec = simulate(net, baseline_demand, shares or uniform_shares(index), seed)
    out = np.zeros(len(index.F))
    for pos, (h, k, r) in enumerate(index.F):
        path = index.R[index.K[k]][r]
        q = int(net.path_legs[net.path_id(path)][0][0])
        lo, hi = _capacity_window(index, h)
        for s in net.platform_departures[q]:
            dep = net.stop_departure[s]
            if lo < dep <= hi and rec.onboard_arr[s] >= 0:
                v = net.stop_run[s]
                out[pos] += max(0, int(net.run_capacity[v]) - int(rec.onboard_arr[s]))
    return out


def capacity_shares(scenario: Scenario, incident: Incident | None, index: RecommendationIndex,
                    baseline_demand: DemandMatrix, seed: int = 0,
                    report: list | None = None) -> PathShares:
    """Shares proportional to available capacity; cells with no capacity fall back to
    uniform and are appended to ``report`` as (h, k)."""
    cap = available_capacity(scenario, incident, index, baseline_demand, seed)
    out = np.empty_like(cap)
    for h, k, sl in index.cells():
        tot = cap[sl].sum()
        if tot > 0:
            out[sl] = cap[sl] / tot
        else:
            out[sl] = 1.0 / (sl.stop - sl.start)
            log.warning("no available capacity for h=%d k=%d; uniform fallback", h, k)
            if report is not None:
                report.append((h, k))
    return PathShares(out)


def waiting_paths(index: RecommendationIndex, incident: Incident) -> list:
    """Per OD, the first path riding a suspended route (the 'wait for recovery' option)."""
    blocked = {c.route for c in incident.supply_changes if c.kind == "suspend_route_between"}
    out = []
    for k in index.K:
        hit = [r for r, p in enumerate(index.R[k]) if any(l.route in blocked for l in p.legs)]
        out.append(hit[0] if hit else None)
    return out


def status_quo_shares(index: RecommendationIndex, wait_curve: Sequence, observed_increases,
                      T_end: int, waiting: Sequence | None = None) -> PathShares:
    """Waiting path gets wait_curve(max(0, T_end - interval start)); the rest is split in
    proportion to the observed usage increases (uniform if those are all zero)."""
    curve = np.asarray(wait_curve, dtype=float)
    if curve.ndim != 2 or curve.shape[1] != 2 or len(curve) == 0:
        raise ValidationError("wait_curve must be a list of (remaining_seconds, proportion) points")
    if np.any(np.diff(curve[:, 0]) <= 0):
        raise ValidationError("wait_curve points must have increasing times")
    if np.any((curve[:, 1] < 0) | (curve[:, 1] > 1)):
        raise ValidationError("wait_curve proportions must lie in [0, 1]")
    inc = np.asarray(observed_increases, dtype=float)
    if inc.shape != (len(index.F),):
        raise ValidationError(f"observed_increases needs {len(index.F)} values")
    if np.any(inc < 0):
        raise ValidationError("observed_increases must be nonnegative")
    waiting = list(waiting) if waiting is not None else [0] * len(index.K)
    out = np.zeros(len(index.F))
    for h, k, sl in index.cells():
        nr = sl.stop - sl.start
        rw = waiting[k]
        others = [r for r in range(nr) if r != rw]
        if rw is None:
            w = 0.0
        elif not others:
            out[sl.start + rw] = 1.0
            continue
        else:
            remaining = max(0.0, float(T_end - index.interval(h)[0]))
            w = float(np.interp(remaining, curve[:, 0], curve[:, 1]))
            out[sl.start + rw] = w
        vals = inc[[sl.start + r for r in others]]
        split = vals / vals.sum() if vals.sum() > 0 else np.full(len(others), 1.0 / len(others))
        out[[sl.start + r for r in others]] = (1.0 - w) * split
    return PathShares(out)
