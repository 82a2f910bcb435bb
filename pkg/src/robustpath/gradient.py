"""Simulation-based first-order approximation of the system travel time.

One simulation record yields Z(f~) and, for every (h, k, r), the marginal cost of one
more passenger on that path: its own travel time, plus one headway for every full
vehicle it would squeeze a queued passenger off (at its boarding stops and at the
stops it rides through).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import PathFlows, ValidationError
from .simulator import SimulationRecord


@dataclass(frozen=True)
class LinearizationResult:
    Z_tilde: float
    beta: np.ndarray
    reference_flows: PathFlows
    TA: np.ndarray
    TQ: np.ndarray
    TO: np.ndarray
    probed: np.ndarray

    def approx(self, f: np.ndarray) -> float:
        """Z^(f) = Z(f~) + beta^T (f - f~)."""
        return float(self.Z_tilde + self.beta @ (np.asarray(f) - self.reference_flows.values))

    def to_csv(self, index) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("h", "k", "r", "beta_seconds", "TA", "TQ", "TO"))
        for i, (h, k, r) in enumerate(index.F):
            w.writerow((h, k, r, f"{self.beta[i]:.6f}", f"{self.TA[i]:.6f}",
                        f"{self.TQ[i]:.6f}", f"{self.TO[i]:.6f}"))
        return buf.getvalue()


def _legs_of(record: SimulationRecord, members: np.ndarray, j: int) -> np.ndarray:
    return record.leg_start[members] + j


def _rides(record: SimulationRecord, members: np.ndarray, j: int):
    """Yield (run, boarding stop, last ridden-through stop + 1) for runs used on leg j."""
    net = record.net
    legs = _legs_of(record, members, j)
    bs = record.leg_board_stop[legs]
    ok = bs >= 0
    if not ok.any():
        return []
    legs, bs = legs[ok], bs[ok]
    runs = net.stop_run[bs]
    out = []
    for v in np.unique(runs):
        sel = runs == v
        b = int(bs[sel].min())
        al = record.leg_alight_stop[legs[sel]]
        if (al >= 0).any():
            end = int(al[al >= 0].max())
        else:
            last = int(net.run_offset[v + 1])
            done = np.flatnonzero(record.onboard_dep[b:last] >= 0)
            end = b + int(done[-1]) + 1 if len(done) else b + 1
        out.append((int(v), b, end))
    return out


def average_path_time(record: SimulationRecord, pos: int) -> float:
    m = record.members(pos)
    if not len(m):
        raise ValidationError(f"no passengers on F position {pos}; use probe_zero_flow")
    return float(record.travel_time[m].mean())


def queue_term(record: SimulationRecord, pos: int) -> float:
    """Sum over boarding stops b of the mean over boarded vehicles of 1{full} * W."""
    m = record.members(pos)
    W, full = record.headway, record.full
    total = 0.0
    for j in range(_n_legs(record, m)):
        rides = _rides(record, m, j)
        for _, b, _ in rides:
            total += full[b] * W[b] / len(rides)
    return total


def onboard_term(record: SimulationRecord, pos: int) -> float:
    """Sum over boarded vehicles (averaged per boarding stop) of 1{full} * W at the stops
    the vehicle departs with the passenger aboard, excluding the boarding stop."""
    m = record.members(pos)
    W, full = record.headway, record.full
    total = 0.0
    for j in range(_n_legs(record, m)):
        rides = _rides(record, m, j)
        for _, b, end in rides:
            sl = slice(b + 1, end)
            total += float((full[sl] * W[sl]).sum()) / len(rides)
    return total


def _n_legs(record: SimulationRecord, m: np.ndarray) -> int:
    if not len(m):
        return 0
    return int(record.leg_start[m[0] + 1] - record.leg_start[m[0]])


def probe_zero_flow(record: SimulationRecord, pos: int) -> tuple[float, float, float]:
    """Trace a virtual passenger through the recorded vehicle states.

    It taps in at T_s (h_0) or at the interval midpoint and boards the first departure
    with spare capacity left after everyone recorded. If no such run exists before the
    horizon it is charged the unfinished-trip cost.
    """
    net = record.net
    index = net.scenario.index
    h, k, r = index.F[pos]
    path = index.R[index.K[k]][r]
    pid = net.path_id(path)
    plats, alights, walks = net.path_legs[pid]
    lo, hi = index.interval(h)
    tapin = lo if h == 0 else lo + index.tau // 2
    t = tapin + path.access_seconds
    W, full = record.headway, record.full
    TQ = TO = 0.0
    route_of = {q: net._route_ix[rt] for q, (_, rt) in enumerate(net.platform_keys)}
    for q, a_st, walk in zip(plats, alights, walks):
        q, a_st = int(q), int(a_st)
        board = None
        for s in net.platform_departures[q]:
            dep = net.stop_departure[s]
            if dep < t:
                continue
            if record.onboard_dep[s] < 0:  # past the horizon
                break
            v = net.stop_run[s]
            if net.run_station_pos[v, a_st] <= net.stop_pos[s]:
                continue
            if record.onboard_dep[s] < net.run_capacity[v]:
                board = int(s)
                break
        if board is None:
            return record.stranded_penalty(tapin, route_of[q]), TQ, TO
        v = int(net.stop_run[board])
        a = int(net.run_offset[v] + net.run_station_pos[v, a_st])
        TQ += full[board] * W[board]
        sl = slice(board + 1, a)
        TO += float((full[sl] * W[sl]).sum())
        if net.stop_arrival[a] > net.horizon:
            return record.stranded_penalty(tapin, route_of[q]), TQ, TO
        t = int(net.stop_arrival[a]) + int(walk)
    return float(t - tapin), TQ, TO


def linearize(record: SimulationRecord, reference_flows: PathFlows | np.ndarray | None = None) -> LinearizationResult:
    """Z(f~) and beta_hkr = T^A + T^Q + T^O for every (h, k, r) in F."""
    index = record.net.scenario.index
    n = len(index.F)
    if reference_flows is None:
        reference_flows = np.bincount(record.passengers.triple[record.passengers.triple >= 0],
                                      minlength=n).astype(float)
    if not isinstance(reference_flows, PathFlows):
        reference_flows = PathFlows(reference_flows)
    TA, TQ, TO = np.zeros(n), np.zeros(n), np.zeros(n)
    probed = np.zeros(n, dtype=bool)
    for pos in range(n):
        if len(record.members(pos)):
            TA[pos] = average_path_time(record, pos)
            TQ[pos] = queue_term(record, pos)
            TO[pos] = onboard_term(record, pos)
        else:
            TA[pos], TQ[pos], TO[pos] = probe_zero_flow(record, pos)
            probed[pos] = True
    return LinearizationResult(record.Z, TA + TQ + TO, reference_flows, TA, TQ, TO, probed)


def expected_linearization(results: Mapping, probs: Mapping) -> LinearizationResult:
    """Probability-weighted Z and beta over incident scenarios."""
    if set(results) != set(probs):
        raise ValidationError("scenario keys of records and probabilities differ")
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"scenario probabilities sum to {total}, not 1")
    items = [(results[k], float(probs[k])) for k in results]
    first = items[0][0]
    mix = lambda attr: sum(w * getattr(r, attr) for r, w in items)
    return LinearizationResult(
        Z_tilde=float(mix("Z_tilde")), beta=mix("beta"), reference_flows=first.reference_flows,
        TA=mix("TA"), TQ=mix("TQ"), TO=mix("TO"),
        probed=np.any([r.probed for r, _ in items], axis=0))


def linearize_scenarios(records: Mapping, probs: Mapping, reference_flows=None) -> LinearizationResult:
    return expected_linearization({k: linearize(r, reference_flows) for k, r in records.items()}, probs)
