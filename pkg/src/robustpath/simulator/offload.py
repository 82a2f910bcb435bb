"""Pre-pass that turns passengers stuck on blocked vehicles into h_0 demand."""

from __future__ import annotations

import numpy as np

from ..model import Incident, Scenario
from .core import ONBOARD, PassengerSet, run
from .network import compile_network


def offloaded_demand(scenario: Scenario, incident: Incident, pre_passengers: PassengerSet,
                     extra_paths=()) -> tuple[np.ndarray, int]:
    """Load ``pre_passengers`` on the undisrupted timetable up to T_s and offload
    everyone riding a suspended segment to the last platform their vehicle left.

    Returns (counts per OD in K, number offloaded whose new OD is not in K).
    """
    T_s = incident.start
    net = compile_network(scenario, None, horizon=T_s, extra_paths=extra_paths)
    rec = run(net, pre_passengers)
    blocked: dict[str, set] = {}
    for ch in incident.supply_changes:
        if ch.kind != "suspend_route_between" or not (ch.start <= T_s < ch.end):
            continue
        route = scenario.routes[ch.route]
        a = route.position(ch.station_a or route.stop_sequence[0])
        b = route.position(ch.station_b or route.stop_sequence[-1])
        blocked.setdefault(route.id, set()).update(route.stop_sequence[min(a, b):max(a, b) + 1])

    K = {k: i for i, k in enumerate(scenario.index.K)}
    counts = np.zeros(len(K))
    missed = 0
    runs = net.events.runs
    for pid in np.flatnonzero(rec.state == ONBOARD):
        leg = int(rec.cur_leg[pid])
        v = int(net.stop_run[rec.leg_board_stop[leg]])
        run_ = runs[v]
        if run_.route not in blocked:
            continue
        lo, hi = net.run_offset[v], net.run_offset[v + 1]
        departed = [s for s in range(lo, hi) if net.stop_departure[s] <= T_s]
        here = net.station_ids[net.stop_station[departed[-1]]]
        if here not in blocked[run_.route]:
            continue
        dest = net.paths[pre_passengers.path_id[pid]].od[1]
        k = K.get((here, dest))
        if k is None:
            missed += 1
        else:
            counts[k] += 1
    return counts, missed
