# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled event loop; same contract as ``_kernel_py.run_events``."""

from libcpp.vector cimport vector
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair
from libc.stdint cimport int64_t, int32_t, int8_t

ctypedef pair[int64_t, int64_t] Key


def run_events(const int64_t[::1] ev_time, const int8_t[::1] ev_type, const int32_t[::1] ev_stop,
               int64_t horizon,
               const int32_t[::1] stop_run, const int32_t[::1] stop_pos,
               const int32_t[::1] stop_station, const int32_t[::1] stop_platform,
               const int32_t[::1] run_capacity, const int32_t[:, ::1] run_station_pos,
               int n_platforms,
               const int32_t[::1] pax_leg_start, const int64_t[::1] pax_first_arrival,
               const int32_t[::1] leg_platform, const int32_t[::1] leg_alight_station,
               const int64_t[::1] leg_walk_after,
               int64_t[::1] leg_plat_arr, int32_t[::1] leg_board_stop,
               int32_t[::1] leg_alight_stop, int32_t[::1] leg_denied,
               int64_t[::1] pax_tapout, int32_t[::1] pax_cur_leg,
               int32_t[::1] stop_onboard_arr, int32_t[::1] stop_onboard_dep):
    cdef Py_ssize_t n_pax = pax_leg_start.shape[0] - 1
    cdef Py_ssize_t n_runs = run_capacity.shape[0]
    cdef Py_ssize_t n_ev = ev_time.shape[0]
    cdef Py_ssize_t i, e, pid, leg, nxt
    cdef int64_t t, ta
    cdef int32_t s, v, q, here, pos, room
    cdef vector[priority_queue[Key]] pending
    cdef vector[vector[int32_t]] waiting
    cdef vector[vector[int32_t]] onboard
    cdef vector[int32_t] keep
    cdef vector[int32_t] rest
    cdef Py_ssize_t processed = 0

    pending.resize(n_platforms)
    waiting.resize(n_platforms)
    onboard.resize(n_runs)

    leg_plat_arr[:] = -1
    leg_board_stop[:] = -1
    leg_alight_stop[:] = -1
    leg_denied[:] = 0
    pax_tapout[:] = -1
    stop_onboard_arr[:] = -1
    stop_onboard_dep[:] = -1

    with nogil:
        for pid in range(n_pax):
            leg = pax_leg_start[pid]
            pax_cur_leg[pid] = <int32_t>leg
            t = pax_first_arrival[pid]
            leg_plat_arr[leg] = t
            # max-heap on negated keys pops the earliest (time, pid)
            pending[leg_platform[leg]].push(Key(-t, -pid))

        for e in range(n_ev):
            t = ev_time[e]
            if t > horizon:
                break
            processed += 1
            s = ev_stop[e]
            v = stop_run[s]
            if ev_type[e] == 0:
                stop_onboard_arr[s] = <int32_t>onboard[v].size()
                if onboard[v].size() == 0:
                    continue
                here = stop_station[s]
                keep.clear()
                for i in range(<Py_ssize_t>onboard[v].size()):
                    pid = onboard[v][i]
                    leg = pax_cur_leg[pid]
                    if leg_alight_station[leg] != here:
                        keep.push_back(<int32_t>pid)
                        continue
                    leg_alight_stop[leg] = s
                    nxt = leg + 1
                    pax_cur_leg[pid] = <int32_t>nxt
                    if nxt == pax_leg_start[pid + 1]:
                        pax_tapout[pid] = t + leg_walk_after[leg]
                    else:
                        ta = t + leg_walk_after[leg]
                        leg_plat_arr[nxt] = ta
                        pending[leg_platform[nxt]].push(Key(-ta, -pid))
                onboard[v].swap(keep)
            else:
                q = stop_platform[s]
                while pending[q].size() > 0 and -pending[q].top().first <= t:
                    waiting[q].push_back(<int32_t>(-pending[q].top().second))
                    pending[q].pop()
                room = run_capacity[v] - <int32_t>onboard[v].size()
                if waiting[q].size() > 0:
                    pos = stop_pos[s]
                    rest.clear()
                    for i in range(<Py_ssize_t>waiting[q].size()):
                        pid = waiting[q][i]
                        leg = pax_cur_leg[pid]
                        if run_station_pos[v, leg_alight_station[leg]] <= pos:
                            rest.push_back(<int32_t>pid)
                        elif room > 0:
                            leg_board_stop[leg] = s
                            onboard[v].push_back(<int32_t>pid)
                            room -= 1
                        else:
                            leg_denied[leg] += 1
                            rest.push_back(<int32_t>pid)
                    waiting[q].swap(rest)
                stop_onboard_dep[s] = <int32_t>onboard[v].size()
    return processed
