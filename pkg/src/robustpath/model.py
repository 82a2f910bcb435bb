"""Domain types: network, timetable, paths, demand, shares and the index set F."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when scenario input violates a structural invariant."""


MODES = ("rail", "bus", "shuttle")
SHARE_TOL = 1e-9


def parse_time(value) -> int:
    """Integer seconds from an int/float or an ``HH:MM[:SS]`` string."""
    if isinstance(value, bool):
        raise ValidationError(f"bad time value {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValidationError(f"times must be whole seconds, got {value}")
        return int(value)
    if isinstance(value, str):
        parts = value.strip().split(":")
        if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
            raise ValidationError(f"bad clock time {value!r}")
        h, m = int(parts[0]), int(parts[1])
        s = int(parts[2]) if len(parts) == 3 else 0
        return 3600 * h + 60 * m + s
    raise ValidationError(f"bad time value {value!r}")


def format_time(seconds: float) -> str:
    s = int(round(seconds))
    return f"{s // 3600:02d}:{(s % 3600) // 60:02d}:{s % 60:02d}"


@dataclass(frozen=True)
class Station:
    id: str
    name: str = ""
    transfer_walk_seconds: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for other, sec in self.transfer_walk_seconds.items():
            if other == self.id:
                raise ValidationError(f"station {self.id}: self-transfer entry")
            if sec < 0:
                raise ValidationError(f"station {self.id}: negative walk to {other}")


@dataclass(frozen=True)
class Route:
    id: str
    stop_sequence: tuple[str, ...]
    mode: str = "rail"

    def __post_init__(self):
        object.__setattr__(self, "stop_sequence", tuple(self.stop_sequence))
        seq = self.stop_sequence
        if len(seq) < 2:
            raise ValidationError(f"route {self.id}: needs at least two stops")
        if len(set(seq)) != len(seq):
            raise ValidationError(f"route {self.id}: repeated stop in sequence")
        if self.mode not in MODES:
            raise ValidationError(f"route {self.id}: unknown mode {self.mode!r}")

    def position(self, station: str) -> int:
        try:
            return self.stop_sequence.index(station)
        except ValueError:
            raise ValidationError(f"station {station} not on route {self.id}") from None


@dataclass(frozen=True)
class StopTime:
    station: str
    arrival: int
    departure: int


@dataclass(frozen=True)
class VehicleRun:
    run_id: str
    route: str
    capacity: int
    stop_times: tuple[StopTime, ...]

    def __post_init__(self):
        st = tuple(s if isinstance(s, StopTime) else StopTime(s[0], parse_time(s[1]), parse_time(s[2]))
                   for s in self.stop_times)
        object.__setattr__(self, "stop_times", st)
        if self.capacity < 1:
            raise ValidationError(f"run {self.run_id}: capacity must be >= 1")
        if len(st) < 2:
            raise ValidationError(f"run {self.run_id}: needs at least two stops")
        prev = None
        for s in st:
            if s.arrival > s.departure:
                raise ValidationError(f"run {self.run_id}: arrival after departure at {s.station}")
            if prev is not None and s.arrival <= prev.departure:
                raise ValidationError(f"run {self.run_id}: times not increasing at {s.station}")
            prev = s

    @property
    def stations(self) -> tuple[str, ...]:
        return tuple(s.station for s in self.stop_times)

    def shifted(self, stop_times: Sequence[StopTime]) -> "VehicleRun":
        return VehicleRun(self.run_id, self.route, self.capacity, tuple(stop_times))


@dataclass(frozen=True)
class Leg:
    board: str
    route: str
    alight: str


@dataclass(frozen=True)
class Path:
    od: tuple[str, str]
    legs: tuple[Leg, ...]
    access_seconds: int = 0
    egress_seconds: int = 0
    name: str = ""

    def __post_init__(self):
        legs = tuple(l if isinstance(l, Leg) else Leg(*l) for l in self.legs)
        object.__setattr__(self, "legs", legs)
        object.__setattr__(self, "od", tuple(self.od))
        if not legs:
            raise ValidationError(f"path {self.label}: no legs")
        if self.access_seconds < 0 or self.egress_seconds < 0:
            raise ValidationError(f"path {self.label}: negative access/egress")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return "|".join(f"{l.board}-{l.route}-{l.alight}" for l in self.legs)

    def validate(self, stations: Mapping[str, Station], routes: Mapping[str, Route]) -> None:
        where = f"path {self.label} ({self.od[0]}->{self.od[1]})"
        for sid in self.od:
            if sid not in stations:
                raise ValidationError(f"{where}: unknown station {sid}")
        for leg in self.legs:
            if leg.route not in routes:
                raise ValidationError(f"{where}: unknown route {leg.route}")
            for sid in (leg.board, leg.alight):
                if sid not in stations:
                    raise ValidationError(f"{where}: unknown station {sid}")
            route = routes[leg.route]
            try:
                ok = route.position(leg.board) < route.position(leg.alight)
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            if not ok:
                raise ValidationError(f"{where}: {leg.board} does not precede {leg.alight} on {leg.route}")
        if not _reachable(stations, self.od[0], self.legs[0].board):
            raise ValidationError(f"{where}: first boarding station unreachable from origin")
        if not _reachable(stations, self.legs[-1].alight, self.od[1]):
            raise ValidationError(f"{where}: destination unreachable from last alighting station")
        for a, b in zip(self.legs, self.legs[1:]):
            if not _reachable(stations, a.alight, b.board):
                raise ValidationError(f"{where}: no transfer from {a.alight} to {b.board}")


def _reachable(stations: Mapping[str, Station], a: str, b: str) -> bool:
    return a == b or b in stations[a].transfer_walk_seconds


def walk_seconds(stations: Mapping[str, Station], a: str, b: str) -> int:
    if a == b:
        return 0
    return int(stations[a].transfer_walk_seconds[b])


Triple = tuple[int, int, int]


@dataclass(frozen=True)
class RecommendationIndex:
    """Recommendation times h_0..h_H, OD pairs K, path sets R_k and the flat index F.

    ``F`` is h-major, then k, then r. Demand vectors use the (h, k) h-major order.
    """

    H: int
    tau: int
    T_start: int
    K: tuple[tuple[str, str], ...]
    R: Mapping[tuple[str, str], tuple[Path, ...]]
    F: tuple[Triple, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(tuple(k) for k in self.K))
        if self.H < 0 or self.tau <= 0:
            raise ValidationError("H must be >= 0 and tau > 0")
        for k in self.K:
            if not self.R.get(k):
                raise ValidationError(f"OD {k[0]}->{k[1]} has no paths")
        F = tuple((h, ki, r) for h in range(self.H + 1)
                  for ki, k in enumerate(self.K) for r in range(len(self.R[k])))
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "_pos", {t: i for i, t in enumerate(F)})
        offsets = np.zeros(self.n_cells + 1, dtype=np.int64)
        for h in range(self.H + 1):
            for ki, k in enumerate(self.K):
                c = h * len(self.K) + ki
                offsets[c + 1] = offsets[c] + len(self.R[k])
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_intervals(self) -> int:
        return self.H + 1

    @property
    def n_cells(self) -> int:
        return (self.H + 1) * len(self.K)

    def cell(self, h: int, k: int) -> int:
        return h * len(self.K) + k

    def position(self, triple: Triple) -> int:
        return self._pos[tuple(triple)]

    def cell_slice(self, h: int, k: int) -> slice:
        c = self.cell(h, k)
        return slice(int(self._offsets[c]), int(self._offsets[c + 1]))

    def cells(self) -> Iterator[tuple[int, int, slice]]:
        for h in range(self.H + 1):
            for k in range(len(self.K)):
                yield h, k, self.cell_slice(h, k)

    def cell_of_f(self) -> np.ndarray:
        """For each position in F, the (h, k) cell it belongs to."""
        return np.repeat(np.arange(self.n_cells), np.diff(self._offsets))

    def path(self, triple: Triple) -> Path:
        return self.R[self.K[triple[1]]][triple[2]]

    def interval(self, h: int) -> tuple[int, int]:
        """(lo, hi] seconds of interval h; h_0 is the time point T_start."""
        if h == 0:
            return self.T_start, self.T_start
        return self.T_start + (h - 1) * self.tau, self.T_start + h * self.tau

    def interval_of(self, t: float) -> int | None:
        if t == self.T_start:
            return 0
        if t < self.T_start:
            return None
        h = int(math.ceil((t - self.T_start) / self.tau))
        return h if h <= self.H else None


def build_index(paths_config: Mapping, tau: int, H: int, T_s: int,
                stations: Mapping[str, Station] | None = None,
                routes: Mapping[str, Route] | None = None) -> RecommendationIndex:
    """Build the index from ``{"od_pairs": [[o, d], ...], "paths": {"o->d": [...]}}``.

    Paths are validated against the network when ``stations`` and ``routes`` are given.
    """
    K = [tuple(k) for k in paths_config["od_pairs"]]
    if len(set(K)) != len(K):
        raise ValidationError("duplicate OD pair in od_pairs")
    R = {}
    for k in K:
        key = f"{k[0]}->{k[1]}"
        specs = paths_config["paths"].get(key)
        if not specs:
            raise ValidationError(f"OD {key} has no paths")
        R[k] = tuple(path_from_config(k, s) for s in specs)
        if stations is not None and routes is not None:
            for p in R[k]:
                p.validate(stations, routes)
    extra = set(paths_config["paths"]) - {f"{o}->{d}" for o, d in K}
    if extra:
        raise ValidationError(f"paths given for undeclared OD pairs: {sorted(extra)}")
    return RecommendationIndex(H=int(H), tau=int(tau), T_start=int(T_s), K=tuple(K), R=R)


def path_from_config(od, spec: Mapping) -> Path:
    allowed = {"name", "legs", "access_seconds", "egress_seconds"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValidationError(f"unknown path fields {sorted(unknown)}")
    return Path(od=tuple(od), legs=tuple(Leg(*l) for l in spec["legs"]),
                access_seconds=int(spec.get("access_seconds", 0)),
                egress_seconds=int(spec.get("egress_seconds", 0)),
                name=spec.get("name", ""))


@dataclass(frozen=True)
class DemandMatrix:
    """Demand d_hk as an (H+1) x |K| array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("demand must be a 2-D (H+1) x |K| array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValidationError("demand must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_vector(cls, vec: np.ndarray, index: RecommendationIndex) -> "DemandMatrix":
        return cls(np.asarray(vec, dtype=float).reshape(index.n_intervals, len(index.K)))

    def vector(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    def check(self, index: RecommendationIndex) -> None:
        if self.values.shape != (index.n_intervals, len(index.K)):
            raise ValidationError(f"demand shape {self.values.shape} does not match "
                                  f"index ({index.n_intervals}, {len(index.K)})")

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class PathShares:
    """Shares p_hkr as a flat vector in F order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def check(self, index: RecommendationIndex, tol: float = SHARE_TOL) -> None:
        v = self.values
        if v.shape != (len(index.F),):
            raise ValidationError(f"shares length {v.shape} does not match |F|={len(index.F)}")
        if np.any(v < -tol) or np.any(v > 1 + tol):
            raise ValidationError("shares must lie in [0, 1]")
        for h, k, sl in index.cells():
            s = v[sl].sum()
            if abs(s - 1.0) > tol:
                raise ValidationError(f"shares for (h={h}, k={index.K[k]}) sum to {s!r}, not 1")

    @classmethod
    def normalized(cls, values: np.ndarray, index: RecommendationIndex) -> "PathShares":
        """Clip to [0, 1] and renormalize each (h, k) row; used on solver output."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
        for _, _, sl in index.cells():
            s = v[sl].sum()
            v[sl] = v[sl] / s if s > 0 else 1.0 / (sl.stop - sl.start)
        return cls(v)

    def to_json(self, index: RecommendationIndex) -> dict:
        rows = []
        for pos, (h, k, r) in enumerate(index.F):
            od = index.K[k]
            rows.append({"h": h, "origin": od[0], "destination": od[1], "r": r,
                         "path": index.R[od][r].label, "share": float(self.values[pos])})
        return {"shares": rows}

    @classmethod
    def from_json(cls, data: Mapping, index: RecommendationIndex) -> "PathShares":
        v = np.full(len(index.F), np.nan)
        kpos = {k: i for i, k in enumerate(index.K)}
        for row in data["shares"]:
            k = kpos.get((row["origin"], row["destination"]))
            if k is None:
                raise ValidationError(f"shares reference unknown OD {row['origin']}->{row['destination']}")
            try:
                v[index.position((int(row["h"]), k, int(row["r"])))] = float(row["share"])
            except KeyError:
                raise ValidationError(f"shares reference unknown triple {(row['h'], k, row['r'])}") from None
        if np.isnan(v).any():
            raise ValidationError("shares file does not cover every (h, k, r)")
        out = cls(v)
        out.check(index)
        return out


@dataclass(frozen=True)
class PathFlows:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0):
            raise ValidationError("flows must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def flows_from_shares(d: DemandMatrix, p: PathShares, index: RecommendationIndex) -> PathFlows:
    d.check(index)
    p.check(index)
    return PathFlows(d.vector()[index.cell_of_f()] * p.values)


def shares_from_flows(f: PathFlows, index: RecommendationIndex) -> PathShares:
    """Inverse of :func:`flows_from_shares`; zero-demand cells get uniform shares."""
    v = np.array(f.values, dtype=float)
    out = np.empty_like(v)
    for _, _, sl in index.cells():
        s = v[sl].sum()
        out[sl] = v[sl] / s if s > 0 else 1.0 / (sl.stop - sl.start)
    return PathShares(out)


@dataclass(frozen=True)
class SupplyChange:
    kind: str
    route: str | None = None
    station_a: str | None = None
    station_b: str | None = None
    start: int | None = None
    end: int | None = None
    runs: tuple[VehicleRun, ...] = ()


@dataclass(frozen=True)
class Incident:
    start: int
    end: int
    supply_changes: tuple[SupplyChange, ...] = ()

    def __post_init__(self):
        if not self.start < self.end:
            raise ValidationError("incident start must precede end")
        for ch in self.supply_changes:
            if ch.kind == "suspend_route_between":
                if ch.start is None or ch.end is None or ch.start >= ch.end:
                    raise ValidationError("suspension needs start < end")
                if ch.end < self.start or ch.start > self.end:
                    raise ValidationError("suspension window does not intersect the incident")
            elif ch.kind in ("add_runs", "replace_runs"):
                if ch.kind == "replace_runs" and ch.route is None:
                    raise ValidationError("replace_runs needs a route")
            else:
                raise ValidationError(f"unknown supply change {ch.kind!r}")


@dataclass(frozen=True)
class BackgroundFlow:
    """Passengers outside K with a fixed path (they still count towards Z)."""

    path: Path
    times: tuple[int, ...] = ()
    start: int | None = None
    end: int | None = None
    count: int = 0


@dataclass(frozen=True)
class Scenario:
    stations: Mapping[str, Station]
    routes: Mapping[str, Route]
    runs: tuple[VehicleRun, ...]
    index: RecommendationIndex
    background: tuple[BackgroundFlow, ...] = ()
    horizon_end: int | None = None

    def __post_init__(self):
        for r in self.routes.values():
            for s in r.stop_sequence:
                if s not in self.stations:
                    raise ValidationError(f"route {r.id}: unknown station {s}")
        seen = set()
        for run in self.runs:
            check_run(run, self.routes)
            if run.run_id in seen:
                raise ValidationError(f"duplicate run id {run.run_id}")
            seen.add(run.run_id)
        for k, paths in self.index.R.items():
            for p in paths:
                p.validate(self.stations, self.routes)
        for b in self.background:
            b.path.validate(self.stations, self.routes)

    @property
    def horizon(self) -> int:
        if self.horizon_end is not None:
            return int(self.horizon_end)
        ix = self.index
        return ix.T_start + (ix.H + 2) * ix.tau


def check_run(run: VehicleRun, routes: Mapping[str, Route]) -> None:
    if run.route not in routes:
        raise ValidationError(f"run {run.run_id}: unknown route {run.route}")
    seq = routes[run.route].stop_sequence
    pos = [seq.index(s) if s in seq else -1 for s in run.stations]
    if min(pos) < 0:
        raise ValidationError(f"run {run.run_id}: stop not on route {run.route}")
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValidationError(f"run {run.run_id}: stops out of route order")
