import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustpath.model import (DemandMatrix, Incident, Leg, Path, PathFlows, PathShares, Route,
                              Station, StopTime, SupplyChange, ValidationError, VehicleRun,
                              build_index, flows_from_shares, format_time, parse_time,
                              shares_from_flows)

STATIONS = {s: Station(s) for s in ("A", "B", "C", "D")}
ROUTES = {"L": Route("L", ("A", "B", "C", "D")), "M": Route("M", ("B", "D"))}


def _cfg(n_paths=(2, 3)):
    ods = [["A", "D"], ["B", "D"]][:len(n_paths)]
    pool = {"A->D": [["A", "L", "D"]], "B->D": [["B", "L", "D"]]}
    paths = {}
    for (o, d), n in zip(ods, n_paths):
        legs = pool[f"{o}->{d}"][0]
        paths[f"{o}->{d}"] = [{"name": f"p{i}", "legs": [legs], "access_seconds": i} for i in range(n)]
    return {"od_pairs": ods, "paths": paths}


def test_parse_time_formats():
    assert parse_time("08:14") == 8 * 3600 + 14 * 60
    assert parse_time("08:14:30") == 8 * 3600 + 14 * 60 + 30
    assert parse_time(600) == 600
    assert format_time(parse_time("09:44")) == "09:44:00"
    with pytest.raises(ValidationError):
        parse_time("8h14")


def test_interval_h10_covers_944_to_954():
    ix = build_index(_cfg(), 600, 10, parse_time("08:14"), STATIONS, ROUTES)
    lo, hi = ix.interval(10)
    assert (format_time(lo), format_time(hi)) == ("09:44:00", "09:54:00")
    assert ix.interval(0) == (ix.T_start, ix.T_start)
    assert ix.interval_of(ix.T_start) == 0
    assert ix.interval_of(lo) == 9 and ix.interval_of(lo + 1) == 10


def test_h0_only():
    ix = build_index(_cfg(), 600, 0, 0, STATIONS, ROUTES)
    assert {h for h, _, _ in ix.F} == {0}


def test_f_counting():
    ix = build_index(_cfg((2, 3)), 600, 1, 0, STATIONS, ROUTES)
    assert len(ix.F) == 10
    # h-major, then k, then r
    assert ix.F[:5] == ((0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (0, 1, 2))
    assert ix.cell_slice(1, 1) == slice(7, 10)


def test_unknown_route_names_the_path():
    cfg = {"od_pairs": [["A", "D"]], "paths": {"A->D": [{"name": "bad", "legs": [["A", "Z", "D"]]}]}}
    with pytest.raises(ValidationError, match="bad"):
        build_index(cfg, 600, 0, 0, STATIONS, ROUTES)


def test_path_board_after_alight_rejected():
    p = Path(("D", "A"), (Leg("D", "L", "A"),))
    with pytest.raises(ValidationError):
        p.validate(STATIONS, ROUTES)


def test_transfer_needs_walk_entry():
    ok = Path(("A", "D"), (Leg("A", "L", "B"), Leg("B", "M", "D")))
    ok.validate(STATIONS, ROUTES)
    bad = Path(("A", "D"), (Leg("A", "L", "B"), Leg("C", "L", "D")))
    with pytest.raises(ValidationError):
        bad.validate(STATIONS, ROUTES)


def test_vehicle_run_invariants():
    with pytest.raises(ValidationError):
        VehicleRun("r", "L", 0, (StopTime("A", 0, 0), StopTime("B", 10, 10)))
    with pytest.raises(ValidationError):
        VehicleRun("r", "L", 5, (StopTime("A", 0, 5), StopTime("B", 3, 10)))
    with pytest.raises(ValidationError):
        VehicleRun("r", "L", 5, (StopTime("A", 5, 0), StopTime("B", 10, 10)))


def test_route_and_station_invariants():
    with pytest.raises(ValidationError):
        Route("R", ("A",))
    with pytest.raises(ValidationError):
        Route("R", ("A", "A", "B"))
    with pytest.raises(ValidationError):
        Station("A", transfer_walk_seconds={"A": 10})
    with pytest.raises(ValidationError):
        Station("A", transfer_walk_seconds={"B": -1})


def test_incident_invariants():
    with pytest.raises(ValidationError):
        Incident(100, 100)
    with pytest.raises(ValidationError):
        Incident(100, 200, (SupplyChange("suspend_route_between", "L", "A", "B", 300, 400),))
    with pytest.raises(ValidationError):
        Incident(100, 200, (SupplyChange("teleport", "L"),))


def test_flows_from_shares_examples():
    ix = build_index(_cfg((2, 4)), 600, 0, 0, STATIONS, ROUTES)
    d = DemandMatrix([[100.0, 10.0]])
    p = PathShares([0.25, 0.75, 0.25, 0.25, 0.25, 0.25])
    f = flows_from_shares(d, p, ix).values
    assert f.tolist() == [25, 75, 2.5, 2.5, 2.5, 2.5]
    f0 = flows_from_shares(DemandMatrix([[0.0, 0.0]]), p, ix).values
    assert not f0.any()


def test_bad_share_row_rejected():
    ix = build_index(_cfg((2,)), 600, 0, 0, STATIONS, ROUTES)
    with pytest.raises(ValidationError):
        flows_from_shares(DemandMatrix([[1.0]]), PathShares([0.5, 0.6]), ix)
    with pytest.raises(ValidationError):
        DemandMatrix([[-1.0]])


def test_shares_json_round_trip():
    ix = build_index(_cfg((2, 3)), 600, 2, 0, STATIONS, ROUTES)
    rng = np.random.default_rng(0)
    p = PathShares.normalized(rng.random(len(ix.F)), ix)
    back = PathShares.from_json(json.loads(json.dumps(p.to_json(ix))), ix)
    np.testing.assert_array_equal(back.values, p.values)
    bad = p.to_json(ix)
    bad["shares"] = bad["shares"][1:]
    with pytest.raises(ValidationError):
        PathShares.from_json(bad, ix)


def test_f_ordering_is_stable():
    a = build_index(_cfg((2, 3)), 600, 3, 0, STATIONS, ROUTES)
    b = build_index(json.loads(json.dumps(_cfg((2, 3)))), 600, 3, 0, STATIONS, ROUTES)
    assert a.F == b.F
    assert json.dumps(PathShares(np.ones(len(a.F))).to_json(a)) == \
        json.dumps(PathShares(np.ones(len(b.F))).to_json(b))


@settings(max_examples=60, deadline=None)
@given(n1=st.integers(1, 4), n2=st.integers(1, 4), H=st.integers(0, 3), seed=st.integers(0, 10_000))
def test_shares_flows_round_trip(n1, n2, H, seed):
    ix = build_index(_cfg((n1, n2)), 300, H, 0, STATIONS, ROUTES)
    rng = np.random.default_rng(seed)
    p = PathShares.normalized(rng.random(len(ix.F)), ix)
    d = DemandMatrix(rng.integers(0, 3, size=(H + 1, 2)) * rng.random((H + 1, 2)) * 50)
    f = flows_from_shares(d, p, ix)
    dv = d.vector()
    for h, k, sl in ix.cells():
        assert abs(f.values[sl].sum() - dv[ix.cell(h, k)]) <= 1e-9 * max(1.0, dv[ix.cell(h, k)])
    back = shares_from_flows(f, ix)
    back.check(ix)
    pos = dv[ix.cell_of_f()] > 0
    np.testing.assert_allclose(back.values[pos], p.values[pos], atol=1e-12)


def test_negative_flows_rejected():
    with pytest.raises(ValidationError):
        PathFlows([1.0, -0.1])
