"""Incident application and the compiled, array-based view of a scenario."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..model import (Incident, Path, Scenario, StopTime, SupplyChange, ValidationError,
                     VehicleRun, check_run, walk_seconds)

ARRIVAL, DEPARTURE = 0, 1


@dataclass(frozen=True)
class EventList:
    """Post-incident runs plus their time-sorted arrival/departure events.

    Runs are ordered by (route id, run id). Each event is (time, type, run, stop position);
    arrivals precede departures at equal times, then route id, run id, stop position.
    """

    runs: tuple[VehicleRun, ...]
    time: np.ndarray
    kind: np.ndarray
    run: np.ndarray
    pos: np.ndarray

    def __len__(self) -> int:
        return len(self.time)


def _hold(run: VehicleRun, segment: set, start: int, end: int) -> VehicleRun:
    delay = 0
    out = []
    for st in run.stop_times:
        arr, dep = st.arrival + delay, st.departure + delay
        if st.station in segment and start <= dep < end:
            delay += end - dep
            dep = end
        out.append(StopTime(st.station, arr, dep))
    return run.shifted(out) if delay else run


def apply_incident(scenario: Scenario, incident: Incident | None) -> EventList:
    """Rewrite the timetable for the incident's supply changes and sort the events.

    Suspensions become extended dwells: a departure from a suspended stop inside
    [start, end) is held until ``end`` and the rest of the run shifts with it.
    """
    runs = list(scenario.runs)
    for ch in (incident.supply_changes if incident else ()):
        runs = _apply_change(scenario, runs, ch)
    return build_events(runs)


def _apply_change(scenario: Scenario, runs: list, ch: SupplyChange) -> list:
    if ch.kind == "suspend_route_between":
        route = scenario.routes.get(ch.route)
        if route is None:
            raise ValidationError(f"suspension references unknown route {ch.route}")
        a = route.position(ch.station_a if ch.station_a is not None else route.stop_sequence[0])
        b = route.position(ch.station_b if ch.station_b is not None else route.stop_sequence[-1])
        lo, hi = min(a, b), max(a, b)
        segment = set(route.stop_sequence[lo:hi + 1])
        return [_hold(r, segment, ch.start, ch.end) if r.route == route.id else r for r in runs]
    if ch.kind == "add_runs":
        for r in ch.runs:
            check_run(r, scenario.routes)
        return runs + list(ch.runs)
    if ch.kind == "replace_runs":
        if ch.route not in scenario.routes:
            raise ValidationError(f"replace_runs references unknown route {ch.route}")
        for r in ch.runs:
            check_run(r, scenario.routes)
            if r.route != ch.route:
                raise ValidationError(f"replacement run {r.run_id} is not on route {ch.route}")
        return [r for r in runs if r.route != ch.route] + list(ch.runs)
    raise ValidationError(f"unknown supply change {ch.kind!r}")


def build_events(runs: Sequence[VehicleRun]) -> EventList:
    runs = tuple(sorted(runs, key=lambda r: (r.route, r.run_id)))
    ids = [r.run_id for r in runs]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate run id after incident changes")
    t, k, ri, pi = [], [], [], []
    for i, r in enumerate(runs):
        for j, st in enumerate(r.stop_times):
            t += (st.arrival, st.departure)
            k += (ARRIVAL, DEPARTURE)
            ri += (i, i)
            pi += (j, j)
    t = np.asarray(t, dtype=np.int64)
    k = np.asarray(k, dtype=np.int8)
    ri = np.asarray(ri, dtype=np.int32)
    pi = np.asarray(pi, dtype=np.int32)
    # runs are already in (route, run id) order, so the run index is the tie-break key
    order = np.lexsort((pi, ri, k, t))
    return EventList(runs, t[order], k[order], ri[order], pi[order])


def median_headways(runs: Sequence[VehicleRun], fallback: int) -> dict[str, float]:
    """Median positive gap between consecutive departures, per route, over all stations."""
    deps: dict[tuple[str, str], list[int]] = {}
    for r in runs:
        for st in r.stop_times:
            deps.setdefault((r.route, st.station), []).append(st.departure)
    gaps: dict[str, list[int]] = {}
    for (route, _), ts in deps.items():
        ts.sort()
        gaps.setdefault(route, []).extend(b - a for a, b in zip(ts, ts[1:]) if b > a)
    return {route: float(np.median(g)) if g else float(fallback) for route, g in gaps.items()}


@dataclass(frozen=True)
class CompiledNetwork:
    """Flat arrays over stops of the post-incident timetable, shared across runs."""

    scenario: Scenario
    events: EventList
    horizon: int
    station_ids: tuple[str, ...]
    route_ids: tuple[str, ...]
    platform_keys: tuple[tuple[str, str], ...]
    run_offset: np.ndarray          # (n_runs + 1,)
    run_capacity: np.ndarray
    run_route: np.ndarray
    run_station_pos: np.ndarray     # (n_runs, n_stations), -1 if not served
    stop_run: np.ndarray
    stop_pos: np.ndarray
    stop_station: np.ndarray
    stop_platform: np.ndarray
    stop_arrival: np.ndarray
    stop_departure: np.ndarray
    stop_headway: np.ndarray        # W at each departure
    ev_stop: np.ndarray
    route_headway: np.ndarray       # median scheduled headway per route (pre-incident)
    platform_departures: tuple[np.ndarray, ...]  # flat stop ids sorted by departure
    paths: tuple[Path, ...]
    path_legs: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...] = field(repr=False)

    @property
    def n_runs(self) -> int:
        return len(self.run_capacity)

    def path_id(self, path: Path) -> int:
        return self._path_ids[path]

    def full_flags(self, onboard_dep: np.ndarray) -> np.ndarray:
        return onboard_dep >= self.run_capacity[self.stop_run]


def compile_network(scenario: Scenario, incident: Incident | None = None,
                    horizon: int | None = None, extra_paths: Sequence[Path] = ()) -> CompiledNetwork:
    """Apply ``incident`` and flatten everything the event loop and the gradient need."""
    ev = apply_incident(scenario, incident)
    horizon = scenario.horizon if horizon is None else int(horizon)
    station_ids = tuple(sorted(scenario.stations))
    route_ids = tuple(sorted(scenario.routes))
    s_ix = {s: i for i, s in enumerate(station_ids)}
    r_ix = {r: i for i, r in enumerate(route_ids)}

    runs = ev.runs
    sizes = np.array([len(r.stop_times) for r in runs], dtype=np.int64)
    run_offset = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n_stops = int(run_offset[-1])
    stop_run = np.repeat(np.arange(len(runs), dtype=np.int32), sizes)
    stop_pos = (np.arange(n_stops) - np.repeat(run_offset[:-1], sizes)).astype(np.int32)
    stop_station = np.empty(n_stops, dtype=np.int32)
    stop_arrival = np.empty(n_stops, dtype=np.int64)
    stop_departure = np.empty(n_stops, dtype=np.int64)
    run_station_pos = np.full((len(runs), len(station_ids)), -1, dtype=np.int32)
    platforms: dict[tuple[str, str], int] = {}
    stop_platform = np.empty(n_stops, dtype=np.int32)
    j = 0
    for i, r in enumerate(runs):
        for p, st in enumerate(r.stop_times):
            stop_station[j] = s_ix[st.station]
            stop_arrival[j] = st.arrival
            stop_departure[j] = st.departure
            run_station_pos[i, s_ix[st.station]] = p
            stop_platform[j] = platforms.setdefault((st.station, r.route), len(platforms))
            j += 1

    # platforms referenced only by paths still need ids (e.g. a route with all runs removed)
    paths = list(p for k in scenario.index.K for p in scenario.index.R[k])
    paths += [b.path for b in scenario.background]
    paths += list(extra_paths)
    for path in paths:
        for leg in path.legs:
            platforms.setdefault((leg.board, leg.route), len(platforms))

    ev_stop = (run_offset[ev.run] + ev.pos).astype(np.int32)
    dep_mask = ev.kind == DEPARTURE
    dep_stops = ev_stop[dep_mask]
    per_platform: list[list[int]] = [[] for _ in platforms]
    for s in dep_stops:
        per_platform[stop_platform[s]].append(int(s))

    route_med = median_headways(scenario.runs, fallback=scenario.index.tau)
    route_headway = np.array([route_med.get(r, float(scenario.index.tau)) for r in route_ids])
    run_route = np.array([r_ix[r.route] for r in runs], dtype=np.int32)
    stop_headway = np.empty(n_stops, dtype=float)
    for q, lst in enumerate(per_platform):
        prev = None
        for s in lst:
            t = stop_departure[s]
            stop_headway[s] = route_headway[run_route[stop_run[s]]] if prev is None else float(t - prev)
            prev = t

    path_ids: dict[Path, int] = {}
    uniq: list[Path] = []
    legs = []
    for path in paths:
        if path in path_ids:
            continue
        path_ids[path] = len(uniq)
        uniq.append(path)
        plat = np.array([platforms[(l.board, l.route)] for l in path.legs], dtype=np.int32)
        alight = np.array([s_ix[l.alight] for l in path.legs], dtype=np.int32)
        walk = [walk_seconds(scenario.stations, a.alight, b.board)
                for a, b in zip(path.legs, path.legs[1:])]
        walk.append(walk_seconds(scenario.stations, path.legs[-1].alight, path.od[1]) + path.egress_seconds)
        legs.append((plat, alight, np.array(walk, dtype=np.int64)))

    net = CompiledNetwork(
        scenario=scenario, events=ev, horizon=horizon, station_ids=station_ids,
        route_ids=route_ids, platform_keys=tuple(sorted(platforms, key=platforms.get)),
        run_offset=run_offset, run_capacity=np.array([r.capacity for r in runs], dtype=np.int32),
        run_route=run_route, run_station_pos=run_station_pos, stop_run=stop_run,
        stop_pos=stop_pos, stop_station=stop_station, stop_platform=stop_platform,
        stop_arrival=stop_arrival, stop_departure=stop_departure, stop_headway=stop_headway,
        ev_stop=ev_stop, route_headway=route_headway,
        platform_departures=tuple(np.array(l, dtype=np.int64) for l in per_platform),
        paths=tuple(uniq), path_legs=tuple(legs))
    object.__setattr__(net, "_path_ids", path_ids)
    object.__setattr__(net, "_station_ix", s_ix)
    object.__setattr__(net, "_route_ix", r_ix)
    return net
