"""Small scenario builders shared by the tests."""

from __future__ import annotations

import numpy as np

from robustpath.model import (BackgroundFlow, Incident, Leg, Path, Route, Scenario, Station,
                              StopTime, SupplyChange, VehicleRun, build_index)

T_S = 8 * 3600


def line_runs(route: str, stations, first: int, n: int, headway: int, segment: int,
              dwell: int = 0, capacity: int = 10, prefix: str | None = None) -> list[VehicleRun]:
    out = []
    for j in range(n):
        t = first + j * headway
        st = []
        for s in stations:
            st.append(StopTime(s, t, t + dwell))
            t += dwell + segment
        out.append(VehicleRun(f"{prefix or route}{j:03d}", route, capacity, tuple(st)))
    return out


def two_stop(capacity: int = 2, n_runs: int = 1, H: int = 0, tau: int = 600, dep: int = T_S + 100,
             segment: int = 300, egress: int = 0) -> Scenario:
    """One route A->B; the single OD (A, B) has one direct path."""
    stations = {"A": Station("A"), "B": Station("B")}
    routes = {"L": Route("L", ("A", "B"))}
    runs = line_runs("L", ("A", "B"), dep, n_runs, 300, segment, capacity=capacity)
    cfg = {"od_pairs": [["A", "B"]],
           "paths": {"A->B": [{"name": "direct", "legs": [["A", "L", "B"]], "egress_seconds": egress}]}}
    return Scenario(stations, routes, tuple(runs), build_index(cfg, tau, H, T_S, stations, routes))


def random_scenario(seed: int, with_incident: bool | None = None):
    """A local line A over all stations and an express B over a subset, random runs
    and capacities, two or three ODs with direct and transfer paths.

    Returns (scenario, incident or None, demand array).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 8))
    ids = [f"s{i}" for i in range(n)]
    stations = {s: Station(s) for s in ids}
    mid = sorted(rng.choice(np.arange(1, n - 1), size=int(rng.integers(1, n - 1)), replace=False).tolist())
    sub = [0] + mid + [n - 1]
    routes = {"A": Route("A", tuple(ids), "rail"),
              "B": Route("B", tuple(ids[i] for i in sub), "bus")}
    runs = []
    for r, seq in (("A", ids), ("B", [ids[i] for i in sub])):
        runs += line_runs(r, seq, T_S - int(rng.integers(0, 400)), int(rng.integers(2, 7)),
                          int(rng.integers(120, 500)), int(rng.integers(60, 200)),
                          int(rng.integers(0, 30)), int(rng.integers(1, 7)))
    ods, paths = [], {}
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    for i in rng.choice(len(pairs), size=min(len(pairs), int(rng.integers(2, 4))), replace=False):
        a, b = pairs[int(i)]
        o, d = ids[a], ids[b]
        ps = [{"name": "local", "legs": [[o, "A", d]]}]
        if a in sub and b in sub:
            ps.append({"name": "express", "legs": [[o, "B", d]]})
        xs = [x for x in sub if a < x < b and b in sub]
        if xs:
            x = ids[xs[0]]
            ps.append({"name": "transfer", "legs": [[o, "A", x], [x, "B", d]]})
        ods.append([o, d])
        paths[f"{o}->{d}"] = ps
    H = int(rng.integers(0, 3))
    index = build_index({"od_pairs": ods, "paths": paths}, 300, H, T_S, stations, routes)
    bg = ()
    if rng.random() < 0.5:
        bg = (BackgroundFlow(Path((ids[0], ids[-1]), (Leg(ids[0], "A", ids[-1]),)),
                             start=T_S, end=T_S + 600, count=int(rng.integers(1, 6))),)
    scenario = Scenario(stations, routes, tuple(runs), index, bg)
    if with_incident is None:
        with_incident = bool(rng.random() < 0.5)
    incident = None
    if with_incident:
        a = int(rng.integers(0, n - 1))
        incident = Incident(T_S + 100, T_S + 700, (SupplyChange(
            "suspend_route_between", "A", ids[a], ids[a + 1], T_S + 100, T_S + 700),))
    demand = rng.integers(0, 8, size=(H + 1, len(ods))).astype(float)
    return scenario, incident, demand


def invariant_violations(rec) -> dict[str, int]:
    """Count conservation, capacity, FCFS and trajectory-order violations in a record."""
    from robustpath.simulator import STATE_NAMES, TAPPED_OUT
    net = rec.net
    n = len(rec.passengers)
    out = {"conservation": 0, "capacity": 0, "fcfs": 0, "monotone": 0}
    counts = rec.state_counts()
    if sum(counts.values()) != n or set(counts) != set(STATE_NAMES):
        out["conservation"] += 1
    out["conservation"] += int(np.sum((rec.state == TAPPED_OUT) != (rec.tapout >= 0)))
    cap = net.run_capacity[net.stop_run]
    for arr in (rec.onboard_dep, rec.onboard_arr):
        seen = arr >= 0
        out["capacity"] += int(np.sum(arr[seen] > cap[seen]))
    # FCFS per platform: an earlier platform arrival never boards later
    arr = rec.leg_plat_arr
    ok = arr >= 0
    board_t = np.where(rec.leg_board_stop >= 0,
                       net.stop_departure[np.maximum(rec.leg_board_stop, 0)], np.iinfo(np.int64).max)
    for q in np.unique(rec.leg_platform[ok]):
        legs = np.flatnonzero(ok & (rec.leg_platform == q))
        order = legs[np.argsort(arr[legs], kind="stable")]
        best_before, group_max, last = -1, -1, None
        for leg in order:
            if arr[leg] != last:
                best_before = max(best_before, group_max)
                group_max, last = -1, arr[leg]
            if board_t[leg] < best_before:
                out["fcfs"] += 1
            group_max = max(group_max, board_t[leg])
    rows = rec.trajectories()
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0] and b[5] < a[5]:
            out["monotone"] += 1
    return out


def resim_delta(rec, pos: int, max_members: int = 8) -> float:
    """Z(f~ + e) - Z(f~) by re-simulation, averaged over duplicating up to
    ``max_members`` evenly spaced members of the F position."""
    from robustpath.simulator import run
    m = rec.members(pos)
    pick = m[np.unique(np.linspace(0, len(m) - 1, min(max_members, len(m))).round().astype(int))]
    pax = rec.passengers
    deltas = [run(rec.net, pax.plus(int(pax.path_id[i]), pos, int(pax.tapin[i]))).Z - rec.Z for i in pick]
    return float(np.mean(deltas))


def bus_heavy(index):
    """Shares that overload the parallel bus so vehicles fill up."""
    from robustpath.model import PathShares
    w = np.array([1.0 if index.path(t).label.endswith("-bus") else 0.5 for t in index.F])
    return PathShares.normalized(w, index)


def linear_toy(n_paths=(2,), H: int = 0, rho: float = 1.0, Gamma: float = 1.1, seed: int = 0,
               n_samples: int = 12):
    """An index over stations A..D with the given path counts per OD, a model fitted to
    random samples and a hand-made linearization with random beta.

    Returns (index, lin, model).
    """
    from robustpath.gradient import LinearizationResult
    from robustpath.model import DemandMatrix, PathShares, flows_from_shares
    from robustpath.uncertainty import fit
    g = np.random.default_rng(seed)
    stations = {s: Station(s) for s in "ABCD"}
    routes = {"L": Route("L", ("A", "B", "C", "D"))}
    ods = [["A", "D"], ["B", "D"], ["A", "C"]][:len(n_paths)]
    paths = {f"{o}->{d}": [{"name": f"p{i}", "legs": [[o, "L", d]], "access_seconds": i} for i in range(n)]
             for (o, d), n in zip(ods, n_paths)}
    index = build_index({"od_pairs": ods, "paths": paths}, 600, H, T_S, stations, routes)
    samples = [DemandMatrix(g.uniform(20, 60, (H + 1, len(ods)))) for _ in range(n_samples)]
    model = fit(samples, rho=rho, Gamma=Gamma)
    beta = g.uniform(100, 2000, len(index.F))
    f = flows_from_shares(DemandMatrix.from_vector(model.d_bar, index),
                          PathShares.normalized(np.ones(len(index.F)), index), index)
    zero = np.zeros(len(index.F))
    lin = LinearizationResult(float(beta @ f.values) + 500.0, beta, f, beta.copy(), zero, zero,
                              np.zeros(len(index.F), dtype=bool))
    return index, lin, model


def dominant_toy(H: int = 1) -> Scenario:
    """A -> B by a fast frequent line or a slow line three times longer."""
    stations = {"A": Station("A"), "B": Station("B")}
    routes = {"F": Route("F", ("A", "B")), "S": Route("S", ("A", "B"))}
    runs = line_runs("F", "AB", T_S - 60, 12, 180, 300, capacity=40) + \
        line_runs("S", "AB", T_S - 60, 12, 180, 900, capacity=40)
    cfg = {"od_pairs": [["A", "B"]],
           "paths": {"A->B": [{"name": "fast", "legs": [["A", "F", "B"]]},
                              {"name": "slow", "legs": [["A", "S", "B"]]}]}}
    return Scenario(stations, routes, tuple(runs), build_index(cfg, 600, H, T_S, stations, routes))
