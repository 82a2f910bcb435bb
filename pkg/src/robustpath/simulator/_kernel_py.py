"""Pure-Python event loop. Mirrors ``_kernel.pyx`` line for line."""

import heapq


def run_events(ev_time, ev_type, ev_stop, horizon,
               stop_run, stop_pos, stop_station, stop_platform,
               run_capacity, run_station_pos, n_platforms,
               pax_leg_start, pax_first_arrival,
               leg_platform, leg_alight_station, leg_walk_after,
               leg_plat_arr, leg_board_stop, leg_alight_stop, leg_denied,
               pax_tapout, pax_cur_leg, stop_onboard_arr, stop_onboard_dep):
    """Process time-sorted arrival (0) / departure (1) events up to ``horizon``.

    Output arrays are filled in place; -1 marks "never happened".
    Returns the number of events processed.
    """
    ev_time = ev_time.tolist()
    ev_type = ev_type.tolist()
    ev_stop = ev_stop.tolist()
    stop_run_l = stop_run.tolist()
    stop_pos_l = stop_pos.tolist()
    stop_station_l = stop_station.tolist()
    stop_platform_l = stop_platform.tolist()
    cap = run_capacity.tolist()
    rsp = run_station_pos.tolist()
    leg_start = pax_leg_start.tolist()
    leg_plat = leg_platform.tolist()
    leg_alight = leg_alight_station.tolist()
    leg_walk = leg_walk_after.tolist()

    n_pax = len(leg_start) - 1
    n_runs = len(cap)
    pending = [[] for _ in range(n_platforms)]
    waiting = [[] for _ in range(n_platforms)]
    onboard = [[] for _ in range(n_runs)]
    cur_leg = list(leg_start[:-1])
    plat_arr = [-1] * len(leg_plat)
    board_stop = [-1] * len(leg_plat)
    alight_stop = [-1] * len(leg_plat)
    denied = [0] * len(leg_plat)
    tapout = [-1] * n_pax
    ob_arr = [-1] * len(stop_run_l)
    ob_dep = [-1] * len(stop_run_l)

    for pid in range(n_pax):
        leg = cur_leg[pid]
        t = int(pax_first_arrival[pid])
        plat_arr[leg] = t
        pending[leg_plat[leg]].append((t, pid))
    for q in pending:
        heapq.heapify(q)

    processed = 0
    for e in range(len(ev_time)):
        t = ev_time[e]
        if t > horizon:
            break
        processed += 1
        s = ev_stop[e]
        v = stop_run_l[s]
        if ev_type[e] == 0:
            ob = onboard[v]
            ob_arr[s] = len(ob)
            if not ob:
                continue
            here = stop_station_l[s]
            keep = []
            for pid in ob:
                leg = cur_leg[pid]
                if leg_alight[leg] != here:
                    keep.append(pid)
                    continue
                alight_stop[leg] = s
                if leg + 1 == leg_start[pid + 1]:
                    tapout[pid] = t + leg_walk[leg]
                    cur_leg[pid] = leg + 1
                else:
                    nxt = leg + 1
                    cur_leg[pid] = nxt
                    ta = t + leg_walk[leg]
                    plat_arr[nxt] = ta
                    heapq.heappush(pending[leg_plat[nxt]], (ta, pid))
            onboard[v] = keep
        else:
            q = stop_platform_l[s]
            pq = pending[q]
            wq = waiting[q]
            while pq and pq[0][0] <= t:
                wq.append(heapq.heappop(pq)[1])
            ob = onboard[v]
            room = cap[v] - len(ob)
            if wq:
                pos = stop_pos_l[s]
                row = rsp[v]
                rest = []
                for pid in wq:
                    leg = cur_leg[pid]
                    if row[leg_alight[leg]] <= pos:
                        rest.append(pid)
                    elif room > 0:
                        board_stop[leg] = s
                        ob.append(pid)
                        room -= 1
                    else:
                        denied[leg] += 1
                        rest.append(pid)
                waiting[q] = rest
            ob_dep[s] = len(ob)

    leg_plat_arr[:] = plat_arr
    leg_board_stop[:] = board_stop
    leg_alight_stop[:] = alight_stop
    leg_denied[:] = denied
    pax_tapout[:] = tapout
    pax_cur_leg[:] = cur_leg
    stop_onboard_arr[:] = ob_arr
    stop_onboard_dep[:] = ob_dep
    return processed
