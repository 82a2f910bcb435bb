"""Bundled synthetic scenarios.

``example1`` is the capacity-1 line used to check the gradient exactly.
``disruption_config`` is a ~20-station network: a rail line (Blue) suspended for
40 minutes, a parallel bus, and two feeder-plus-rail transfer corridors.
"""

from __future__ import annotations

import numpy as np

from .model import (BackgroundFlow, Leg, Path, Route, Scenario, Station, StopTime, VehicleRun,
                    build_index, format_time, parse_time)
from .simulator.core import substream


def example1(N: int, headway: int = 300, segment: int = 120, capacity: int = 1,
             n_runs: int | None = None, T_s: int = 8 * 3600) -> Scenario:
    """Stations S1..S{N+1} on one route; a passenger waits at each of S2..SN at T_s for a
    one-stop ride. The only recommended OD is (S1, S{N+1}) at h_0."""
    if N < 2:
        raise ValueError("N must be at least 2")
    n_runs = n_runs or N + 3
    ids = [f"S{i}" for i in range(1, N + 2)]
    stations = {s: Station(s) for s in ids}
    routes = {"L": Route("L", tuple(ids), "bus")}
    runs = []
    for j in range(n_runs):
        t0 = T_s + 60 + j * headway
        st = tuple(StopTime(s, t0 + i * segment, t0 + i * segment) for i, s in enumerate(ids))
        runs.append(VehicleRun(f"L{j:03d}", "L", capacity, st))
    cfg = {"od_pairs": [[ids[0], ids[-1]]],
           "paths": {f"{ids[0]}->{ids[-1]}": [{"name": "through", "legs": [[ids[0], "L", ids[-1]]]}]}}
    index = build_index(cfg, 600, 0, T_s, stations, routes)
    bg = tuple(BackgroundFlow(Path((ids[i], ids[i + 1]), (Leg(ids[i], "L", ids[i + 1]),)), (T_s,))
               for i in range(1, N))
    horizon = T_s + 60 + (N + 1) * segment + n_runs * headway + 600
    return Scenario(stations, routes, tuple(runs), index, bg, horizon)


# -- disruption case ---------------------------------------------------------------

T_START = "08:14"
T_END = "08:54"

DEFAULTS = {
    "tau": 600, "H": 6,
    "blue": {"capacity": 600, "headway": 300, "segment": 150, "dwell": 30},
    "bus": {"capacity": 50, "headway": 360, "segment": 120, "dwell": 20},
    "feeder": {"capacity": 35, "headway": 300, "segment": 240, "dwell": 20},
    "rail": {"capacity": 100, "headway": 360, "segment": 240, "dwell": 30},
    "od_weights": [1.0, 0.9, 0.9, 0.8, 0.6],
    "profile": [40, 40, 38, 36, 34, 32],
    "offloaded": [0, 20, 20, 20, 20],
    "background": {"green": 300, "brown": 300, "bus_local": 100, "bus_loop": 100},
    "day_noise": 0.15,
    "n_days": 16,
}


def _stations():
    ids = (["B1", "B2", "B3", "B4", "B5", "LOOP", "X1", "X2", "X3", "X4", "N1", "N2",
            "G0", "G1", "G2", "W1", "W2", "R0", "R1", "R2"])
    return [{"id": s, "name": s} for s in ids]


ROUTES = [
    {"id": "Blue", "stop_sequence": ["B1", "B2", "B3", "B4", "B5", "LOOP"], "mode": "rail"},
    {"id": "P", "stop_sequence": ["B1", "X1", "B2", "X2", "B3", "X3", "B4", "X4", "B5", "LOOP"],
     "mode": "bus"},
    {"id": "NS1", "stop_sequence": ["B1", "N1", "G1"], "mode": "bus"},
    {"id": "NS2", "stop_sequence": ["B3", "N2", "G2"], "mode": "bus"},
    {"id": "WE1", "stop_sequence": ["B2", "W1", "R1"], "mode": "bus"},
    {"id": "WE2", "stop_sequence": ["B4", "W2", "R2"], "mode": "bus"},
    {"id": "Green", "stop_sequence": ["G0", "G1", "G2", "LOOP"], "mode": "rail"},
    {"id": "Brown", "stop_sequence": ["R0", "R1", "R2", "LOOP"], "mode": "rail"},
]

OD_PAIRS = [["B1", "LOOP"], ["B2", "LOOP"], ["B3", "LOOP"], ["B4", "LOOP"], ["B5", "LOOP"]]

# (feeder route, transfer station, trunk route) per origin
_CORRIDORS = {"B1": ("NS1", "G1", "Green"), "B2": ("WE1", "R1", "Brown"),
              "B3": ("NS2", "G2", "Green"), "B4": ("WE2", "R2", "Brown")}


def _paths():
    out = {}
    for o, d in OD_PAIRS:
        ps = [{"name": f"{o}-blue", "legs": [[o, "Blue", d]]},
              {"name": f"{o}-bus", "legs": [[o, "P", d]]}]
        if o in _CORRIDORS:
            f, x, trunk = _CORRIDORS[o]
            ps.append({"name": f"{o}-{f}-{trunk}", "legs": [[o, f, x], [x, trunk, d]]})
        out[f"{o}->{d}"] = ps
    return out


def _service(route, prefix, p, first="07:30", last="09:40"):
    return {"route": route, "prefix": prefix, "capacity": p["capacity"], "first_departure": first,
            "last_departure": last, "headway": p["headway"], "segment_seconds": [p["segment"]],
            "dwell_seconds": p["dwell"]}


def disruption_config(params: dict | None = None, seed: int = 7) -> dict:
    """All five JSON documents of the synthetic disruption, keyed by file name."""
    p = {**DEFAULTS, **(params or {})}
    network = {"stations": _stations(), "routes": ROUTES}
    services = [_service("Blue", "blue", p["blue"]), _service("P", "bus", p["bus"], "07:31")]
    for i, r in enumerate(("NS1", "NS2", "WE1", "WE2")):
        services.append(_service(r, r.lower(), p["feeder"], f"07:3{i}"))
    services += [_service("Green", "green", p["rail"], "07:20"),
                 _service("Brown", "brown", p["rail"], "07:23")]
    timetable = {"services": services}
    bgc = p["background"]
    background = [
        {"name": "green-through", "od": ["G0", "LOOP"], "legs": [["G0", "Green", "LOOP"]],
         "start": "08:00", "end": "09:20", "count": bgc["green"]},
        {"name": "brown-through", "od": ["R0", "LOOP"], "legs": [["R0", "Brown", "LOOP"]],
         "start": "08:00", "end": "09:20", "count": bgc["brown"]},
        {"name": "bus-local", "od": ["X1", "X4"], "legs": [["X1", "P", "X4"]],
         "start": "08:00", "end": "09:20", "count": bgc["bus_local"]},
        {"name": "bus-loop", "od": ["X2", "LOOP"], "legs": [["X2", "P", "LOOP"]],
         "start": "08:00", "end": "09:20", "count": bgc["bus_loop"]},
    ]
    paths = {"recommendation": {"tau": p["tau"], "H": p["H"], "T_start": T_START},
             "od_pairs": OD_PAIRS, "paths": _paths(), "background": background}
    incident = {"start": T_START, "end": T_END,
                "supply_changes": [{"kind": "suspend_route_between", "route": "Blue",
                                    "station_a": "B1", "station_b": "LOOP",
                                    "start": T_START, "end": T_END}],
                "duration_scenarios": [{"end": "08:44", "probability": 0.25},
                                       {"end": "08:54", "probability": 0.5},
                                       {"end": "09:04", "probability": 0.25}]}
    demand = _demand(p, seed)
    return {"network.json": network, "timetable.json": timetable, "paths.json": paths,
            "incident.json": incident, "demand.json": demand}


def base_demand(p: dict) -> np.ndarray:
    """(H+1) x K expected demand before day-to-day noise and leaving passengers."""
    H = p["H"]
    w = np.asarray(p["od_weights"], dtype=float)
    prof = np.asarray(p["profile"][:H], dtype=float)
    base = np.zeros((H + 1, len(w)))
    base[0] = p["offloaded"]
    base[1:] = prof[:, None] * w[None, :]
    return base


def _demand(p: dict, seed: int) -> dict:
    base = base_demand(p)
    sig = p["day_noise"]
    days = []
    for i in range(p["n_days"]):
        g = substream(seed, "baseline_day", i)
        days.append(np.round(base * np.exp(g.normal(0.0, sig, base.shape) - sig * sig / 2), 0))
    g = substream(seed, "actual_day")
    actual = base * np.exp(g.normal(0.0, sig, base.shape) - sig * sig / 2)
    actual = np.round(actual * (1.0 - g.uniform(0.1, 0.3, base.shape)), 0)
    # waiting proportion by remaining recovery time (seconds), and observed usage
    # increase per path during past disruptions (blue = waiting path)
    wait_curve = [[0, 0.85], [600, 0.55], [1200, 0.35], [2400, 0.15]]
    inc = []
    for h in range(p["H"] + 1):
        for o, _ in OD_PAIRS:
            inc += [0.0, 12.0] + ([8.0] if o in _CORRIDORS else [])
    return {"baseline_days": [d.tolist() for d in days], "actual": actual.tolist(),
            "status_quo": {"wait_curve": wait_curve, "observed_increases": inc}}


def write_disruption(directory, params: dict | None = None, seed: int = 7) -> list[str]:
    """Write the five JSON files; return their paths."""
    from .scenario_io import write_json
    import os
    out = []
    for name, doc in disruption_config(params, seed).items():
        path = os.path.join(directory, name)
        write_json(path, doc)
        out.append(path)
    return out


def load_disruption(params: dict | None = None, seed: int = 7):
    """(scenario, incident, duration scenarios, DemandFile) straight from the builder."""
    from .scenario_io import (parse_demand, parse_incident, parse_network, parse_paths,
                              parse_timetable, duration_scenarios)
    cfg = disruption_config(params, seed)
    stations, routes = parse_network(cfg["network.json"])
    runs = parse_timetable(cfg["timetable.json"], routes)
    index, bg, horizon = parse_paths(cfg["paths.json"], stations, routes)
    scenario = Scenario(stations, routes, tuple(runs), index, bg, horizon)
    incident = parse_incident(cfg["incident.json"], routes)
    scen = duration_scenarios(cfg["incident.json"], incident)
    return scenario, incident, scen, parse_demand(cfg["demand.json"], index)


__all__ = ["example1", "disruption_config", "write_disruption", "load_disruption", "base_demand",
           "DEFAULTS", "T_START", "T_END", "format_time", "parse_time"]
