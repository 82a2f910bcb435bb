"""JSON scenario files.

A scenario directory holds ``network.json``, ``timetable.json`` and ``paths.json``;
``demand.json`` and ``incident.json`` are passed separately. Every object is checked
against an allowed key set so typos fail loudly instead of being ignored.

network.json::

    {"stations": [{"id": "B1", "name": "...", "transfer_walk_seconds": {"X": 60}}],
     "routes": [{"id": "Blue", "stop_sequence": ["B1", "B2"], "mode": "rail"}]}

timetable.json (explicit runs and/or frequency services expanded into runs)::

    {"runs": [{"run_id": "b1", "route": "Blue", "capacity": 600,
               "stop_times": [["B1", "08:00:00", "08:00:30"], ...]}],
     "services": [{"route": "Blue", "prefix": "b", "capacity": 600,
                   "first_departure": "07:30", "last_departure": "09:30", "headway": 300,
                   "segment_seconds": [150, 150], "dwell_seconds": 30}]}

paths.json::

    {"recommendation": {"tau": 600, "H": 6, "T_start": "08:14"},
     "od_pairs": [["B1", "LOOP"]],
     "paths": {"B1->LOOP": [{"name": "blue", "legs": [["B1", "Blue", "LOOP"]]}]},
     "background": [{"name": "...", "od": ["G0", "LOOP"], "legs": [...],
                     "start": "08:00", "end": "09:30", "count": 200}],
     "horizon_end": "09:40"}

demand.json::

    {"nominal": [[...]], "baseline_days": [[[...]]], "samples": [[[...]]], "actual": [[...]],
     "status_quo": {"wait_curve": [[0, 0.0], [1800, 0.6]],
                    "observed_increases": [...]}}

Matrices are (H+1) x |K| row lists (row h, column k); ``observed_increases`` is a
flat list over F. incident.json::

    {"start": "08:14", "end": "08:54",
     "supply_changes": [{"kind": "suspend_route_between", "route": "Blue",
                         "station_a": "B1", "station_b": "LOOP",
                         "start": "08:14", "end": "08:54"},
                        {"kind": "add_runs", "runs": [...], "services": [...]}],
     "duration_scenarios": [{"end": "08:44", "probability": 0.3}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Mapping

import numpy as np

from .model import (BackgroundFlow, DemandMatrix, Incident, RecommendationIndex, Route,
                    Scenario, Station, StopTime, SupplyChange, ValidationError, VehicleRun,
                    build_index, parse_time, path_from_config)


def _check_keys(obj: Mapping, allowed: set, where: str, required: set = frozenset()) -> None:
    if not isinstance(obj, Mapping):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown fields {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ValidationError(f"{where}: missing fields {sorted(missing)}")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def parse_network(cfg: Mapping) -> tuple[dict, dict]:
    _check_keys(cfg, {"stations", "routes"}, "network", {"stations", "routes"})
    stations, routes = {}, {}
    for s in cfg["stations"]:
        _check_keys(s, {"id", "name", "transfer_walk_seconds"}, "station", {"id"})
        if s["id"] in stations:
            raise ValidationError(f"duplicate station {s['id']}")
        walks = {k: int(v) for k, v in s.get("transfer_walk_seconds", {}).items()}
        stations[s["id"]] = Station(s["id"], s.get("name", ""), walks)
    for s in stations.values():
        for other in s.transfer_walk_seconds:
            if other not in stations:
                raise ValidationError(f"station {s.id}: transfer to unknown station {other}")
    for r in cfg["routes"]:
        _check_keys(r, {"id", "stop_sequence", "mode"}, "route", {"id", "stop_sequence"})
        if r["id"] in routes:
            raise ValidationError(f"duplicate route {r['id']}")
        routes[r["id"]] = Route(r["id"], tuple(r["stop_sequence"]), r.get("mode", "rail"))
    return stations, routes


def parse_run(cfg: Mapping) -> VehicleRun:
    _check_keys(cfg, {"run_id", "route", "capacity", "stop_times"}, "run",
                {"run_id", "route", "capacity", "stop_times"})
    st = tuple(StopTime(s, parse_time(a), parse_time(d)) for s, a, d in cfg["stop_times"])
    return VehicleRun(str(cfg["run_id"]), cfg["route"], int(cfg["capacity"]), st)


def expand_service(cfg: Mapping, routes: Mapping[str, Route]) -> list[VehicleRun]:
    """Frequency-based service description -> explicit runs."""
    _check_keys(cfg, {"route", "prefix", "capacity", "first_departure", "last_departure",
                      "headway", "segment_seconds", "dwell_seconds", "from_station", "to_station"},
                "service", {"route", "capacity", "first_departure", "last_departure", "headway",
                            "segment_seconds"})
    route = routes.get(cfg["route"])
    if route is None:
        raise ValidationError(f"service references unknown route {cfg['route']}")
    seq = list(route.stop_sequence)
    lo = seq.index(cfg["from_station"]) if "from_station" in cfg else 0
    hi = seq.index(cfg["to_station"]) if "to_station" in cfg else len(seq) - 1
    stops = seq[lo:hi + 1]
    seg = [int(x) for x in cfg["segment_seconds"]]
    if len(seg) == 1:
        seg = seg * (len(stops) - 1)
    if len(seg) != len(stops) - 1:
        raise ValidationError(f"service on {route.id}: need {len(stops) - 1} segment times")
    dwell = int(cfg.get("dwell_seconds", 0))
    headway = int(cfg["headway"])
    if headway <= 0:
        raise ValidationError(f"service on {route.id}: headway must be positive")
    t0, t1 = parse_time(cfg["first_departure"]), parse_time(cfg["last_departure"])
    prefix = cfg.get("prefix", route.id)
    runs = []
    for j, dep0 in enumerate(range(t0, t1 + 1, headway)):
        st, t = [], dep0
        for i, s in enumerate(stops):
            if i == 0:
                st.append(StopTime(s, t, t))
                continue
            t += seg[i - 1]
            st.append(StopTime(s, t, t + (dwell if i < len(stops) - 1 else 0)))
            t += dwell if i < len(stops) - 1 else 0
        runs.append(VehicleRun(f"{prefix}{j:03d}", route.id, int(cfg["capacity"]), tuple(st)))
    return runs


def parse_timetable(cfg: Mapping, routes: Mapping[str, Route]) -> list[VehicleRun]:
    _check_keys(cfg, {"runs", "services"}, "timetable")
    runs = [parse_run(r) for r in cfg.get("runs", [])]
    for s in cfg.get("services", []):
        runs += expand_service(s, routes)
    return runs


def parse_paths(cfg: Mapping, stations, routes) -> tuple[RecommendationIndex, tuple, int | None]:
    _check_keys(cfg, {"recommendation", "od_pairs", "paths", "background", "horizon_end"},
                "paths", {"recommendation", "od_pairs", "paths"})
    rec = cfg["recommendation"]
    _check_keys(rec, {"tau", "H", "T_start"}, "recommendation", {"tau", "H", "T_start"})
    index = build_index(cfg, int(rec["tau"]), int(rec["H"]), parse_time(rec["T_start"]),
                        stations, routes)
    bg = []
    for b in cfg.get("background", []):
        _check_keys(b, {"name", "od", "legs", "access_seconds", "egress_seconds", "start", "end",
                        "count", "times"}, "background", {"od", "legs"})
        path = path_from_config(b["od"], {k: b[k] for k in ("name", "legs", "access_seconds",
                                                            "egress_seconds") if k in b})
        count = int(b.get("count", 0))
        if count and ("start" not in b or "end" not in b):
            raise ValidationError(f"background {path.label}: count needs start and end")
        bg.append(BackgroundFlow(path, tuple(parse_time(t) for t in b.get("times", [])),
                                 parse_time(b["start"]) if "start" in b else None,
                                 parse_time(b["end"]) if "end" in b else None, count))
    horizon = parse_time(cfg["horizon_end"]) if cfg.get("horizon_end") is not None else None
    return index, tuple(bg), horizon


def parse_incident(cfg: Mapping, routes: Mapping[str, Route]) -> Incident:
    _check_keys(cfg, {"start", "end", "supply_changes", "duration_scenarios"}, "incident",
                {"start", "end"})
    changes = []
    for ch in cfg.get("supply_changes", []):
        _check_keys(ch, {"kind", "route", "station_a", "station_b", "start", "end", "runs",
                         "services"}, "supply change", {"kind"})
        runs = [parse_run(r) for r in ch.get("runs", [])]
        for s in ch.get("services", []):
            runs += expand_service(s, routes)
        changes.append(SupplyChange(
            kind=ch["kind"], route=ch.get("route"), station_a=ch.get("station_a"),
            station_b=ch.get("station_b"),
            start=parse_time(ch["start"]) if "start" in ch else None,
            end=parse_time(ch["end"]) if "end" in ch else None, runs=tuple(runs)))
        if ch["kind"] == "suspend_route_between" and ch.get("route") not in routes:
            raise ValidationError(f"suspension references unknown route {ch.get('route')}")
    return Incident(parse_time(cfg["start"]), parse_time(cfg["end"]), tuple(changes))


def duration_scenarios(cfg: Mapping, incident: Incident) -> dict[str, tuple[Incident, float]]:
    """Incident variants differing in end time, for the scenario-expected gradient."""
    out = {}
    for i, sc in enumerate(cfg.get("duration_scenarios", [])):
        _check_keys(sc, {"end", "probability"}, "duration scenario", {"end", "probability"})
        end = parse_time(sc["end"])
        changes = tuple(replace(c, end=end) if c.kind == "suspend_route_between" and c.end == incident.end
                        else c for c in incident.supply_changes)
        out[f"end={end}"] = (Incident(incident.start, end, changes), float(sc["probability"]))
    return out


@dataclass
class DemandFile:
    nominal: DemandMatrix | None = None
    baseline_days: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    actual: DemandMatrix | None = None
    wait_curve: list | None = None
    observed_increases: np.ndarray | None = None


def _matrix(rows, index: RecommendationIndex, where: str) -> DemandMatrix:
    m = np.asarray(rows, dtype=float)
    if m.shape != (index.n_intervals, len(index.K)):
        raise ValidationError(f"{where}: expected shape {(index.n_intervals, len(index.K))}, got {m.shape}")
    return DemandMatrix(m)


def parse_demand(cfg: Mapping, index: RecommendationIndex) -> DemandFile:
    _check_keys(cfg, {"nominal", "baseline_days", "samples", "actual", "status_quo"}, "demand")
    out = DemandFile()
    if cfg.get("nominal") is not None:
        out.nominal = _matrix(cfg["nominal"], index, "demand.nominal")
    out.baseline_days = [_matrix(m, index, "demand.baseline_days") for m in cfg.get("baseline_days", [])]
    out.samples = [_matrix(m, index, "demand.samples") for m in cfg.get("samples", [])]
    if cfg.get("actual") is not None:
        out.actual = _matrix(cfg["actual"], index, "demand.actual")
    sq = cfg.get("status_quo")
    if sq is not None:
        _check_keys(sq, {"wait_curve", "observed_increases"}, "status_quo")
        out.wait_curve = [(float(a), float(b)) for a, b in sq.get("wait_curve", [])]
        if "observed_increases" in sq:
            inc = np.asarray(sq["observed_increases"], dtype=float)
            if inc.shape != (len(index.F),):
                raise ValidationError(f"status_quo.observed_increases: expected {len(index.F)} values")
            out.observed_increases = inc
    return out


def demand_matrix_to_json(d: DemandMatrix) -> list:
    return [[float(x) for x in row] for row in d.values]


def load_scenario(directory) -> Scenario:
    d = FsPath(directory)
    stations, routes = parse_network(read_json(d / "network.json"))
    runs = parse_timetable(read_json(d / "timetable.json"), routes)
    index, bg, horizon = parse_paths(read_json(d / "paths.json"), stations, routes)
    return Scenario(stations, routes, tuple(runs), index, bg, horizon)


def load_incident(path, scenario: Scenario) -> tuple[Incident, dict]:
    cfg = read_json(path)
    inc = parse_incident(cfg, scenario.routes)
    return inc, duration_scenarios(cfg, inc)


def load_demand(path, scenario: Scenario) -> DemandFile:
    return parse_demand(read_json(path), scenario.index)


def write_json(path, obj) -> None:
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=False)
        fh.write("\n")
