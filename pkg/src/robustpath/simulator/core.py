"""Passenger materialization, the simulation driver and its record."""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..model import (DemandMatrix, PathShares, RecommendationIndex, Scenario,
                     ValidationError)
from . import _backend
from .network import CompiledNetwork

TAPPED_OUT, ONBOARD, QUEUED, STRANDED = 0, 1, 2, 3
STATE_NAMES = ("tapped_out", "onboard_at_horizon", "queued_at_horizon", "stranded")


def substream(seed: int, name: str, *key: int) -> np.random.Generator:
    """Independent generator for a named stream under one master seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()), *key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class PassengerSet:
    """Passengers as parallel arrays.

    ``triple`` is the position in F for recommended passengers and -1 for background.
    """

    path_id: np.ndarray
    triple: np.ndarray
    tapin: np.ndarray

    def __post_init__(self):
        for name, dt in (("path_id", np.int32), ("triple", np.int32), ("tapin", np.int64)):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=dt))

    def __len__(self) -> int:
        return len(self.tapin)

    @classmethod
    def empty(cls) -> "PassengerSet":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def concat(cls, parts: Iterable["PassengerSet"]) -> "PassengerSet":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.path_id for p in parts]),
                   np.concatenate([p.triple for p in parts]),
                   np.concatenate([p.tapin for p in parts]))

    def plus(self, path_id: int, triple: int, tapin: int) -> "PassengerSet":
        return PassengerSet(np.append(self.path_id, path_id), np.append(self.triple, triple),
                            np.append(self.tapin, tapin))


def largest_remainder(total: int, quotas: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``total``; leftover units go to the largest
    fractional parts, ties to the lower index."""
    quotas = np.asarray(quotas, dtype=float)
    base = np.floor(quotas + 1e-9).astype(np.int64)
    left = total - int(base.sum())
    frac = quotas - base
    order = sorted(range(len(quotas)), key=lambda i: (-round(frac[i], 9), i))
    while left > 0:
        for i in order[:left]:
            base[i] += 1
        left = total - int(base.sum())
    while left < 0:
        for i in reversed(order):
            if left == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                left += 1
    return base


def _interleave(counts: np.ndarray) -> np.ndarray:
    """Spread path labels evenly over time-sorted passengers (stride scheduling)."""
    total = int(counts.sum())
    out = np.empty(total, dtype=np.int64)
    given = np.zeros(len(counts))
    for j in range(total):
        lag = counts * (j + 0.5) / total - given
        lag[given >= counts] = -np.inf
        r = int(np.argmax(lag))
        out[j] = r
        given[r] += 1
    return out


def materialize_passengers(d: DemandMatrix, p: PathShares, net: CompiledNetwork,
                           seed: int) -> PassengerSet:
    """Integer passengers per (h, k, r) with seeded tap-in times.

    Counts use largest-remainder rounding of d_hk * p_hkr to round(d_hk). Interval h
    passengers tap in uniformly on (lo, hi]; h_0 passengers tap in at exactly T_s.
    Time draws depend only on (seed, cell, count), so stable counts give stable times.
    """
    index = net.scenario.index
    d.check(index)
    p.check(index)
    dv = d.vector()
    pid, trip, tin = [], [], []
    for h, k, sl in index.cells():
        c = index.cell(h, k)
        total = int(math.floor(dv[c] + 0.5))
        if total == 0:
            continue
        counts = largest_remainder(total, dv[c] * p.values[sl])
        lo, hi = index.interval(h)
        if h == 0:
            times = np.full(total, lo, dtype=np.int64)
        else:
            times = np.sort(substream(seed, "demand", c, total).integers(lo + 1, hi + 1, size=total))
        labels = _interleave(counts)
        paths = index.R[index.K[k]]
        for j in range(total):
            r = int(labels[j])
            pid.append(net.path_id(paths[r]))
            trip.append(sl.start + r)
            tin.append(times[j])
    return PassengerSet(np.array(pid), np.array(trip), np.array(tin))


def background_passengers(net: CompiledNetwork, seed: int) -> PassengerSet:
    pid, tin = [], []
    for i, b in enumerate(net.scenario.background):
        times = list(b.times)
        if b.count:
            times += sorted(substream(seed, "background", i).integers(b.start + 1, b.end + 1, size=b.count))
        pid += [net.path_id(b.path)] * len(times)
        tin += [int(t) for t in times]
    return PassengerSet(np.array(pid), np.full(len(pid), -1), np.array(tin))


@dataclass(frozen=True)
class SimulationRecord:
    """Everything one run produced. Per-leg arrays are indexed through ``leg_start``."""

    net: CompiledNetwork
    passengers: PassengerSet
    leg_start: np.ndarray
    leg_platform: np.ndarray
    leg_alight_station: np.ndarray
    leg_plat_arr: np.ndarray
    leg_board_stop: np.ndarray
    leg_alight_stop: np.ndarray
    leg_denied: np.ndarray
    tapout: np.ndarray
    cur_leg: np.ndarray
    onboard_arr: np.ndarray
    onboard_dep: np.ndarray
    full: np.ndarray
    state: np.ndarray
    travel_time: np.ndarray
    Z: float
    events_processed: int

    @property
    def headway(self) -> np.ndarray:
        return self.net.stop_headway

    def stranded_penalty(self, tapin: float, route_ix: int) -> float:
        return float(self.net.horizon - tapin + self.net.route_headway[route_ix])

    def state_counts(self) -> dict[str, int]:
        c = np.bincount(self.state, minlength=4)
        return {n: int(c[i]) for i, n in enumerate(STATE_NAMES)}

    def members(self, pos: int) -> np.ndarray:
        """Passenger ids counted in f_hkr for F position ``pos``."""
        return np.flatnonzero(self.passengers.triple == pos)

    def wait_time(self) -> np.ndarray:
        """Total platform waiting per passenger (boarding minus platform arrival, summed)."""
        net = self.net
        wait = np.zeros(len(self.passengers))
        owner = np.repeat(np.arange(len(self.passengers)), np.diff(self.leg_start))
        arr = self.leg_plat_arr
        boarded = self.leg_board_stop >= 0
        w = np.where(boarded, net.stop_departure[np.maximum(self.leg_board_stop, 0)] - arr, 0)
        unboarded = (~boarded) & (arr >= 0) & (arr <= net.horizon)
        w = np.where(unboarded, net.horizon - arr, w)
        np.add.at(wait, owner, w)
        return wait

    def summary(self) -> dict:
        index = self.net.scenario.index
        rows = []
        wait = self.wait_time()
        for pos, (h, k, r) in enumerate(index.F):
            m = self.members(pos)
            od = index.K[k]
            rows.append({"h": h, "origin": od[0], "destination": od[1], "r": r,
                         "path": index.R[od][r].label, "passengers": int(len(m)),
                         "mean_travel_time": float(self.travel_time[m].mean()) if len(m) else None,
                         "mean_wait_time": float(wait[m].mean()) if len(m) else None,
                         "left_behind": int(sum(self.leg_denied[self.leg_start[i]:self.leg_start[i + 1]].sum()
                                                for i in m))})
        rec = self.passengers.triple >= 0
        return {"Z": self.Z, "passengers": int(len(self.passengers)),
                "incident_line_passengers": int(rec.sum()),
                "mean_travel_time": float(self.travel_time.mean()) if len(self.travel_time) else 0.0,
                "left_behind_total": int(self.leg_denied.sum()),
                "states": self.state_counts(), "paths": rows}

    def trajectories(self) -> list[tuple]:
        """Rows (pid, h, k, r, event_type, time, station, run_id) in pid order."""
        net = self.net
        index = net.scenario.index
        runs = net.events.runs
        rows = []
        for i in range(len(self.passengers)):
            t = int(self.passengers.triple[i])
            h, k, r = index.F[t] if t >= 0 else ("", "", "")
            path = net.paths[self.passengers.path_id[i]]
            rows.append((i, h, k, r, "tap_in", int(self.passengers.tapin[i]), path.od[0], ""))
            for j, leg in enumerate(range(self.leg_start[i], self.leg_start[i + 1])):
                pl = path.legs[j]
                if self.leg_plat_arr[leg] >= 0:
                    rows.append((i, h, k, r, "platform_arrival", int(self.leg_plat_arr[leg]), pl.board, ""))
                bs = self.leg_board_stop[leg]
                if bs >= 0:
                    rid = runs[net.stop_run[bs]].run_id
                    rows.append((i, h, k, r, "board", int(net.stop_departure[bs]), pl.board, rid))
                    a = self.leg_alight_stop[leg]
                    if a >= 0:
                        rows.append((i, h, k, r, "alight", int(net.stop_arrival[a]), pl.alight, rid))
            if self.tapout[i] >= 0:
                rows.append((i, h, k, r, "tap_out", int(self.tapout[i]), path.od[1], ""))
        return rows

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("pid", "h", "k", "r", "event_type", "time", "station", "run_id"))
        w.writerows(self.trajectories())
        return buf.getvalue()


def compile_passengers(net: CompiledNetwork, pax: PassengerSet):
    """Flatten per-passenger legs into the arrays the event loop consumes."""
    n = len(pax)
    nlegs = np.array([len(l[0]) for l in net.path_legs], dtype=np.int64)
    per = nlegs[pax.path_id] if n else np.zeros(0, dtype=np.int64)
    leg_start = np.concatenate([[0], np.cumsum(per)]).astype(np.int32)
    if n:
        plat = np.concatenate([net.path_legs[i][0] for i in pax.path_id])
        alight = np.concatenate([net.path_legs[i][1] for i in pax.path_id])
        walk = np.concatenate([net.path_legs[i][2] for i in pax.path_id])
    else:
        plat = alight = np.zeros(0, dtype=np.int32)
        walk = np.zeros(0, dtype=np.int64)
    access = np.array([p.access_seconds for p in net.paths], dtype=np.int64)
    first = pax.tapin + (access[pax.path_id] if n else 0)
    return (leg_start, np.ascontiguousarray(first, dtype=np.int64), plat.astype(np.int32),
            alight.astype(np.int32), walk.astype(np.int64))


def run(net: CompiledNetwork, passengers: PassengerSet, kernel=None) -> SimulationRecord:
    """Load ``passengers`` on the post-incident timetable and record the outcome.

    Unfinished passengers (onboard, queued or stranded at the horizon) cost
    (horizon - tap-in) plus one median scheduled headway of their current route.
    """
    if len(passengers) and int(passengers.tapin.max()) > net.horizon:
        raise ValidationError("passenger taps in after the simulation horizon")
    if len(passengers) and (passengers.path_id.min() < 0 or passengers.path_id.max() >= len(net.paths)):
        raise ValidationError("passenger references an unknown path")
    kernel = kernel or _backend.run_events
    leg_start, first, plat, alight, walk = compile_passengers(net, passengers)
    n, L, S = len(passengers), len(plat), len(net.stop_run)
    out = dict(
        leg_plat_arr=np.empty(L, np.int64), leg_board_stop=np.empty(L, np.int32),
        leg_alight_stop=np.empty(L, np.int32), leg_denied=np.empty(L, np.int32),
        tapout=np.empty(n, np.int64), cur_leg=np.empty(n, np.int32),
        onboard_arr=np.empty(S, np.int32), onboard_dep=np.empty(S, np.int32))
    ev = net.events
    processed = kernel(ev.time, ev.kind, net.ev_stop, int(net.horizon),
                       net.stop_run, net.stop_pos, net.stop_station, net.stop_platform,
                       net.run_capacity, net.run_station_pos, len(net.platform_keys),
                       leg_start, first, plat, alight, walk,
                       out["leg_plat_arr"], out["leg_board_stop"], out["leg_alight_stop"],
                       out["leg_denied"], out["tapout"], out["cur_leg"],
                       out["onboard_arr"], out["onboard_dep"])

    state, tt = _classify(net, passengers, leg_start, plat, alight, out)
    full = np.zeros(S, dtype=bool)
    done_dep = out["onboard_dep"] >= 0
    full[done_dep] = out["onboard_dep"][done_dep] >= net.run_capacity[net.stop_run[done_dep]]
    return SimulationRecord(
        net=net, passengers=passengers, leg_start=leg_start, leg_platform=plat,
        leg_alight_station=alight, leg_plat_arr=out["leg_plat_arr"],
        leg_board_stop=out["leg_board_stop"], leg_alight_stop=out["leg_alight_stop"],
        leg_denied=out["leg_denied"], tapout=out["tapout"], cur_leg=out["cur_leg"],
        onboard_arr=out["onboard_arr"], onboard_dep=out["onboard_dep"], full=full,
        state=state, travel_time=tt, Z=float(tt.sum()), events_processed=int(processed))


def _classify(net, pax, leg_start, plat, alight, out):
    n = len(pax)
    state = np.full(n, TAPPED_OUT, dtype=np.int8)
    tt = np.zeros(n, dtype=float)
    done = out["tapout"] >= 0
    tt[done] = out["tapout"][done] - pax.tapin[done]
    platform_route = np.array([net._route_ix[r] for _, r in net.platform_keys], dtype=np.int64)
    for i in np.flatnonzero(~done):
        leg = int(out["cur_leg"][i])
        q = int(plat[leg])
        route = int(platform_route[q])
        tt[i] = net.horizon - pax.tapin[i] + net.route_headway[route]
        if out["leg_board_stop"][leg] >= 0:
            state[i] = ONBOARD
        # every departure up to the horizon has been processed without taking them
        elif has_service(net, q, int(alight[leg]), max(int(out["leg_plat_arr"][leg]), net.horizon + 1)):
            state[i] = QUEUED
        else:
            state[i] = STRANDED
    return state, tt


def has_service(net: CompiledNetwork, platform: int, alight_station: int, after: int) -> bool:
    """Whether any departure (even past the horizon) from ``platform`` at or after
    ``after`` can carry a passenger to ``alight_station``."""
    for s in net.platform_departures[platform]:
        if net.stop_departure[s] >= after:
            v = net.stop_run[s]
            if net.run_station_pos[v, alight_station] > net.stop_pos[s]:
                return True
    return False


def simulate(net: CompiledNetwork, d: DemandMatrix, p: PathShares, seed: int,
             include_background: bool = True) -> SimulationRecord:
    pax = materialize_passengers(d, p, net, seed)
    if include_background:
        pax = PassengerSet.concat([pax, background_passengers(net, seed)])
    return run(net, pax)
