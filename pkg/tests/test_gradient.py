import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustpath.gradient import (average_path_time, expected_linearization, linearize,
                                 linearize_scenarios, onboard_term, probe_zero_flow, queue_term)
from robustpath.model import (DemandMatrix, Incident, Leg, Path, PathShares, Route, Scenario,
                              Station, SupplyChange, ValidationError, build_index)
from robustpath.simulator import PassengerSet, compile_network, run, simulate
from robustpath.synthetic import example1
from toys import T_S, bus_heavy, line_runs, random_scenario, two_stop


def _run(sc, tapins, triple=0, incident=None, bg=()):
    """Members of F position ``triple`` tap in at ``tapins``; ``bg`` are (path, tapin)
    pairs outside F."""
    net = compile_network(sc, incident)
    path = sc.index.R[sc.index.K[0]][0]
    pid = [net.path_id(path)] * len(tapins) + [net.path_id(p) for p, _ in bg]
    trip = [triple] * len(tapins) + [-1] * len(bg)
    t = list(tapins) + [t for _, t in bg]
    return run(net, PassengerSet(np.array(pid), np.array(trip), np.array(t)))


def test_average_path_time_examples():
    sc = two_stop(dep=T_S + 100, segment=1100, n_runs=2)
    rec = _run(sc, [T_S])
    assert average_path_time(rec, 0) == 1200
    # 600 s and 1800 s trips
    sc = two_stop(dep=T_S + 300, segment=300, n_runs=5, capacity=1)
    rec = _run(sc, [T_S, T_S + 300])
    assert sorted(rec.travel_time.tolist()) == [600, 600]
    rec = _run(two_stop(dep=T_S + 300, segment=300, n_runs=5, capacity=1), [T_S, T_S])
    assert sorted(rec.travel_time.tolist()) == [600, 900]
    assert average_path_time(rec, 0) == 750
    with pytest.raises(ValidationError):
        average_path_time(rec, 1)


def test_queue_term_examples():
    rec = _run(two_stop(capacity=5, n_runs=2), [T_S])
    assert queue_term(rec, 0) == 0
    # one boarding station, one vehicle, full, W = 300 (route median)
    rec = _run(two_stop(capacity=2, n_runs=2), [T_S, T_S])
    assert rec.full[0] and queue_term(rec, 0) == 300


def test_queue_term_two_vehicles_one_full():
    stations = {"A": Station("A"), "B": Station("B")}
    routes = {"L": Route("L", ("A", "B"))}
    runs = []
    for j, dep in enumerate((T_S + 50, T_S + 350, T_S + 750)):
        runs += line_runs("L", ("A", "B"), dep, 1, 300, 200, capacity=2, prefix=f"L{j}")
    cfg = {"od_pairs": [["A", "B"]], "paths": {"A->B": [{"legs": [["A", "L", "B"]]}]}}
    sc = Scenario(stations, routes, tuple(runs), build_index(cfg, 600, 0, T_S, stations, routes))
    rec = _run(sc, [T_S + 100, T_S + 101, T_S + 102])
    W = rec.headway
    boarded = rec.leg_board_stop
    assert W[boarded[0]] == 300 and W[boarded[2]] == 400
    assert queue_term(rec, 0) == 150


def _line(names, capacity):
    stations = {s: Station(s) for s in names}
    routes = {"L": Route("L", tuple(names))}
    runs = line_runs("L", names, T_S + 100, 3, 300, 100, capacity=capacity)
    return stations, routes, runs


def test_onboard_term_examples():
    rec = _run(two_stop(capacity=5, n_runs=2), [T_S])
    assert onboard_term(rec, 0) == 0
    # A..E, full when departing B and C, not D
    names = ("A", "B", "C", "D", "E")
    stations, routes, runs = _line(names, 2)
    cfg = {"od_pairs": [["A", "E"]], "paths": {"A->E": [{"legs": [["A", "L", "E"]]}]}}
    sc = Scenario(stations, routes, tuple(runs), build_index(cfg, 600, 0, T_S, stations, routes))
    bd = Path(("B", "D"), (Leg("B", "L", "D"),))
    net = compile_network(sc, extra_paths=[bd])
    main = net.path_id(sc.index.R[("A", "E")][0])
    rec = run(net, PassengerSet(np.array([main, net.path_id(bd)]), np.array([0, -1]),
                                np.array([T_S, T_S])))
    assert rec.full[1:4].tolist() == [True, True, False]
    assert queue_term(rec, 0) == 0
    assert onboard_term(rec, 0) == 600


@pytest.mark.parametrize("N", [3, 6])
def test_example1_onboard_term(N):
    sc = example1(N)
    rec = simulate(compile_network(sc), DemandMatrix(np.ones((1, 1))), PathShares(np.ones(1)), 0)
    assert onboard_term(rec, 0) == (N - 1) * 300
    # the member itself fills the capacity-1 bus at S1
    assert queue_term(rec, 0) == 300


def test_beta_empty_system_timetable_time():
    sc = two_stop(dep=T_S, segment=900, n_runs=2)
    net = compile_network(sc)
    lin = linearize(simulate(net, DemandMatrix([[0.0]]), PathShares([1.0]), 0))
    assert lin.probed[0] and lin.beta[0] == 900
    lin1 = linearize(simulate(net, DemandMatrix([[1.0]]), PathShares([1.0]), 0))
    assert not lin1.probed[0] and lin1.beta[0] == 900


def test_probe_waits_for_spare_capacity():
    sc = two_stop(capacity=1, n_runs=3, dep=T_S + 100, segment=300)
    path = sc.index.R[("A", "B")][0]
    rec = _run(sc, [], bg=[(path, T_S), (path, T_S + 200)])
    TA, TQ, TO = probe_zero_flow(rec, 0)
    # runs at +100 and +400 are full, boards +700, arrives +1000
    assert (TA, TQ, TO) == (1000, 0, 0)


def test_probe_stranded_penalty():
    sc = two_stop(n_runs=1, dep=T_S + 100)
    inc = Incident(T_S, T_S + 600, (SupplyChange("replace_runs", "L", runs=()),))
    rec = _run(sc, [], incident=inc)
    TA, TQ, TO = probe_zero_flow(rec, 0)
    assert TA == rec.stranded_penalty(T_S, 0) == rec.net.horizon - T_S + rec.net.route_headway[0]
    lin = linearize(rec)
    assert np.isfinite(lin.beta).all()


def test_expected_linearization_examples(disruption_net, nominal_demand):
    ix = disruption_net.scenario.index
    p = PathShares.normalized(np.ones(len(ix.F)), ix)
    lin = linearize(simulate(disruption_net, nominal_demand, p, 0))
    one = expected_linearization({"a": lin}, {"a": 1.0})
    np.testing.assert_array_equal(one.beta, lin.beta)
    assert one.Z_tilde == lin.Z_tilde
    a = lin.__class__(100.0, np.full(len(ix.F), 100.0), lin.reference_flows, lin.TA, lin.TQ, lin.TO, lin.probed)
    b = lin.__class__(300.0, np.full(len(ix.F), 300.0), lin.reference_flows, lin.TA, lin.TQ, lin.TO, lin.probed)
    mix = expected_linearization({"a": a, "b": b}, {"a": 0.5, "b": 0.5})
    assert np.all(mix.beta == 200) and mix.Z_tilde == 200
    with pytest.raises(ValidationError):
        expected_linearization({"a": a, "b": b}, {"a": 0.5, "b": 0.6})


def test_expected_linearization_three_durations():
    stations, routes, _ = _line(("A", "B", "C"), 3)
    runs = line_runs("L", "ABC", T_S - 200, 12, 300, 100, capacity=3)
    cfg = {"od_pairs": [["A", "C"]], "paths": {"A->C": [{"legs": [["A", "L", "C"]]}]}}
    sc = Scenario(stations, routes, tuple(runs), build_index(cfg, 600, 2, T_S, stations, routes))
    probs = {"30": 0.2, "40": 0.5, "50": 0.3}
    recs = {}
    for name in probs:
        end = T_S + int(name) * 60
        inc = Incident(T_S, end, (SupplyChange("suspend_route_between", "L", "A", "B", T_S, end),))
        recs[name] = simulate(compile_network(sc, inc), DemandMatrix([[4.0], [6.0], [5.0]]),
                              PathShares(np.ones(3)), 3)
    mix = linearize_scenarios(recs, probs)
    betas = {k: linearize(r).beta for k, r in recs.items()}
    by_hand = 0.2 * betas["30"] + 0.5 * betas["40"] + 0.3 * betas["50"]
    np.testing.assert_allclose(mix.beta, by_hand, rtol=1e-12)
    assert betas["50"][1] > betas["30"][1]


def _independent_terms(rec, pos):
    """T^A, T^Q, T^O recomputed from the exported trajectory rows."""
    net = rec.net
    runs = {r.run_id: i for i, r in enumerate(net.events.runs)}
    members = set(rec.members(pos).tolist())
    rides = {}      # leg -> run -> [board pos, max alight pos or None]
    legno = {}
    for pid, h, k, r, ev, t, station, run_id in rec.trajectories():
        if pid not in members:
            continue
        if ev == "board":
            j = legno.get(pid, 0)
            legno[pid] = j + 1
            v = runs[run_id]
            bpos = int(net.run_station_pos[v, net._station_ix[station]])
            cur = rides.setdefault(j, {}).setdefault(v, [bpos, None, []])
            cur[0] = min(cur[0], bpos)
            cur[2].append(pid)
        elif ev == "alight":
            j = legno[pid] - 1
            v = runs[run_id]
            apos = int(net.run_station_pos[v, net._station_ix[station]])
            cur = rides[j][v]
            cur[1] = apos if cur[1] is None else max(cur[1], apos)
    TQ = TO = 0.0
    for j, per_run in rides.items():
        for v, (bpos, apos, _) in per_run.items():
            off = int(net.run_offset[v])
            b = off + bpos
            TQ += rec.full[b] * rec.headway[b] / len(per_run)
            if apos is None:  # onboard at the horizon: every processed departure after boarding
                stops = [s for s in range(b + 1, int(net.run_offset[v + 1])) if rec.onboard_dep[s] >= 0]
            else:
                stops = range(b + 1, off + apos)
            TO += sum(rec.full[s] * rec.headway[s] for s in stops) / len(per_run)
    TA = float(np.mean([rec.travel_time[i] for i in members]))
    return TA, TQ, TO


def test_decomposition_matches_independent_implementation(disruption_net, nominal_demand):
    ix = disruption_net.scenario.index
    rec = simulate(disruption_net, nominal_demand, bus_heavy(ix), 2)
    lin = linearize(rec)
    checked = 0
    for pos in range(len(ix.F)):
        if lin.probed[pos]:
            continue
        TA, TQ, TO = _independent_terms(rec, pos)
        assert (TA, TQ, TO) == pytest.approx((lin.TA[pos], lin.TQ[pos], lin.TO[pos]), abs=1e-9)
        checked += 1
    assert checked > 50
    assert lin.TQ.sum() > 0 and lin.TO.sum() > 0


def test_beta_grows_linearly_in_n():
    betas = []
    for N in (3, 5, 7, 9):
        rec = simulate(compile_network(example1(N)), DemandMatrix(np.zeros((1, 1))), PathShares(np.ones(1)), 0)
        betas.append(linearize(rec).TQ[0] + linearize(rec).TO[0])
    assert np.all(np.diff(betas) == 2 * 300)


def test_beta_csv_header(disruption_net, nominal_demand):
    ix = disruption_net.scenario.index
    rec = simulate(disruption_net, nominal_demand, PathShares.normalized(np.ones(len(ix.F)), ix), 2)
    text = linearize(rec).to_csv(ix)
    assert text.splitlines()[0] == "h,k,r,beta_seconds,TA,TQ,TO"
    assert len(text.splitlines()) == len(ix.F) + 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_beta_nonnegative_and_finite(seed):
    sc, inc, d = random_scenario(seed)
    net = compile_network(sc, inc)
    rec = simulate(net, DemandMatrix(d), PathShares.normalized(np.ones(len(sc.index.F)), sc.index), seed)
    lin = linearize(rec)
    assert np.all(np.isfinite(lin.beta)) and np.all(lin.beta >= 0)
    assert np.all(lin.TQ >= 0) and np.all(lin.TO >= 0)
    f = lin.reference_flows.values
    assert lin.approx(f) == pytest.approx(rec.Z)
