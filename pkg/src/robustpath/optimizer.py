"""Robust counterpart, worst-case demand and the MSA fixed-point loop.

The linearized system travel time at shares p and demand d is

    Z^(p, d) = Z(f~) + sum_hkr beta_hkr (d_hk p_hkr - f~_hkr) = Z(f~) - beta'f~ + (A d)'p

with A[hkr, hk] = beta_hkr. Writing d = d_bar + D z, the worst case over the
uncertainty set splits into support functions of the ellipsoid and the polyhedra,
which gives a single SOCP in p and the dual variables y, u, v.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import conic
from .gradient import LinearizationResult, expected_linearization, linearize
from .model import (DemandMatrix, Incident, PathShares, RecommendationIndex, Scenario,
                    ValidationError)
from .simulator import compile_network, simulate
from .uncertainty import UncertaintyModel, realize

log = logging.getLogger(__name__)


def build_matrix_A(lin: LinearizationResult, index: RecommendationIndex) -> np.ndarray:
    """|F| x |HxK| with A[hkr, hk] = beta_hkr and zeros elsewhere."""
    beta = np.asarray(lin.beta, dtype=float)
    if beta.shape != (len(index.F),):
        raise ValidationError("beta does not cover F")
    A = np.zeros((len(index.F), index.n_cells))
    A[np.arange(len(beta)), index.cell_of_f()] = beta
    return A


def _constant(lin: LinearizationResult) -> float:
    return float(lin.Z_tilde - lin.beta @ lin.reference_flows.values)


def linearized_objective(lin: LinearizationResult, index: RecommendationIndex,
                         p: np.ndarray, d: np.ndarray) -> float:
    """Z^(p, d) for shares p and a demand vector d (h-major cells)."""
    A = build_matrix_A(lin, index)
    return _constant(lin) + float((A @ np.asarray(d, dtype=float)) @ np.asarray(p, dtype=float))


@dataclass(frozen=True)
class RCLayout:
    """Variable offsets inside the RC program."""

    nF: int
    n: int
    nh: int

    def block(self, name: str) -> slice:
        sizes = [("p", self.nF)] + [(f"y{i}", self.n) for i in range(1, 7)] + \
                [("u1", self.n), ("u2", self.n), ("v1", self.nh), ("v2", self.nh), ("u3", 1), ("t", 1)]
        o = 0
        for k, s in sizes:
            if k == name:
                return slice(o, o + s)
            o += s
        raise KeyError(name)

    @property
    def size(self) -> int:
        return self.nF + 8 * self.n + 2 * self.nh + 2


def _simplex_rows(index: RecommendationIndex) -> np.ndarray:
    E = np.zeros((index.n_cells, len(index.F)))
    E[index.cell_of_f(), np.arange(len(index.F))] = 1.0
    return E


def build_rc(lin: LinearizationResult, model: UncertaintyModel, index: RecommendationIndex,
             d_nominal: np.ndarray | None = None) -> tuple[conic.ConicProgram, RCLayout]:
    """The robust counterpart as a minimization over (p, y1..y6, u1, u2, v1, v2, u3, t).

    The bilinear term uses the nominal demand ``d_bar`` (or ``d_nominal`` if given).
    """
    model.check_index(index)
    L = RCLayout(len(index.F), index.n_cells, index.n_intervals)
    A = build_matrix_A(lin, index)
    D, S = model.D, model.S
    db = model.d_bar if d_nominal is None else np.asarray(d_nominal, dtype=float)
    prog = conic.ConicProgram(L.size, "min")
    c = np.zeros(L.size)
    c[L.block("p")] = A @ db
    c[L.block("t")] = model.rho
    c[L.block("u1")] = model.d_U - model.d_bar
    c[L.block("u2")] = model.d_bar - model.d_L
    c[L.block("v1")] = model.dH_U - S @ model.d_bar
    c[L.block("v2")] = S @ model.d_bar - model.dH_L
    c[L.block("u3")] = (model.Gamma - 1.0) * model.d_bar.sum()
    prog.set_objective(c, _constant(lin))

    n = L.n
    I = np.eye(n)
    SD = S @ D
    one_D = np.ones(n) @ D

    def rows(nrows):
        return np.zeros((nrows, L.size))

    # D'u1 = y2, -D'u2 = y3, (SD)'v1 = y4, -(SD)'v2 = y5, (1'D)'u3 = y6
    for blk, M, y in (("u1", D.T, "y2"), ("u2", -D.T, "y3"), ("v1", SD.T, "y4"),
                      ("v2", -SD.T, "y5"), ("u3", one_D[:, None], "y6")):
        R = rows(n)
        R[:, L.block(blk)] = M
        R[:, L.block(y)] = -I
        prog.add_eq(R, np.zeros(n))
    # sum_i y_i = (A D)'p
    R = rows(n)
    for i in range(1, 7):
        R[:, L.block(f"y{i}")] = I
    R[:, L.block("p")] = -(A @ D).T
    prog.add_eq(R, np.zeros(n))
    R = rows(index.n_cells)
    R[:, L.block("p")] = _simplex_rows(index)
    prog.add_eq(R, np.ones(index.n_cells))

    prog.set_bounds(L.block("p"), 0.0, 1.0)
    for blk in ("u1", "u2", "v1", "v2", "u3"):
        prog.set_bounds(L.block(blk), 0.0)
    # ||y1|| <= t
    X = rows(n)
    X[:, L.block("y1")] = I
    tc = np.zeros(L.size)
    tc[L.block("t")] = 1.0
    prog.add_soc(tc, 0.0, X, np.zeros(n))
    return prog, L


def build_nominal(lin: LinearizationResult, index: RecommendationIndex, d: np.ndarray) -> conic.ConicProgram:
    """min (A d)'p + const over the share simplex (the rho = 0, no-polyhedra program)."""
    A = build_matrix_A(lin, index)
    nF = len(index.F)
    prog = conic.ConicProgram(nF, "min")
    prog.set_objective(A @ np.asarray(d, dtype=float), _constant(lin))
    prog.add_eq(_simplex_rows(index), np.ones(index.n_cells))
    prog.set_bounds(slice(None), 0.0, 1.0)
    return prog


def build_wd(p_star: np.ndarray, lin: LinearizationResult, model: UncertaintyModel,
             index: RecommendationIndex) -> conic.ConicProgram:
    """max (A D z)'p* s.t. ||z|| <= rho and the polyhedral rows; variables z."""
    model.check_index(index)
    A = build_matrix_A(lin, index)
    g = model.D.T @ (A.T @ np.asarray(p_star, dtype=float))
    prog = conic.ConicProgram(model.dim, "max")
    prog.set_objective(g, _constant(lin) + float((A @ model.d_bar) @ p_star))
    P, q = model.polyhedron()
    prog.add_ineq(P, q)
    prog.add_soc(np.zeros(model.dim), model.rho, np.eye(model.dim), np.zeros(model.dim))
    return prog


@dataclass(frozen=True)
class RCResult:
    shares: PathShares
    objective: float
    solution: conic.ConicSolution
    layout: RCLayout


@dataclass(frozen=True)
class WDResult:
    z: np.ndarray
    demand: DemandMatrix
    objective: float
    solution: conic.ConicSolution | None


def _shares_from(x: np.ndarray, index: RecommendationIndex) -> PathShares:
    return PathShares.normalized(np.clip(x, 0.0, 1.0), index)


def _require_optimal(sol: conic.ConicSolution, what: str) -> None:
    if sol.status != conic.OPTIMAL:
        raise ValidationError(f"{what}: conic solver returned {sol.status} "
                              f"(residuals {sol.residuals})")


# Residuals are relative to the multiplier norms, which are large here; at 1e-8 the RC
# objective can still be off by ~1e-6 relative, enough to reorder near-tied share vectors.
SOLVE_TOL = 1e-10


def solve_rc(lin, model, index, tol: float = SOLVE_TOL) -> RCResult:
    prog, L = build_rc(lin, model, index)
    sol = conic.solve(prog, tol=tol)
    if sol.status != conic.OPTIMAL:
        # the best iterate is still a usable share vector; surface the status
        log.warning("RC solve ended with status %s, residuals %s", sol.status, sol.residuals)
        if sol.status in (conic.INFEASIBLE, conic.UNBOUNDED):
            _require_optimal(sol, "robust counterpart")
    return RCResult(_shares_from(sol.x[L.block("p")], index), sol.objective, sol, L)


def solve_wd(p_star, lin, model, index, tol: float = SOLVE_TOL) -> WDResult:
    p_star = np.asarray(getattr(p_star, "values", p_star), dtype=float)
    if model.rho == 0.0:
        z = np.zeros(model.dim)
        obj = linearized_objective(lin, index, p_star, model.d_bar)
        return WDResult(z, realize(model, z), obj, None)
    sol = conic.solve(build_wd(p_star, lin, model, index), tol=tol)
    if sol.status in (conic.INFEASIBLE, conic.UNBOUNDED):
        _require_optimal(sol, "worst-case demand")
    if sol.status != conic.OPTIMAL:
        log.warning("WD solve ended with status %s, residuals %s", sol.status, sol.residuals)
    return WDResult(sol.x, realize(model, sol.x), sol.objective, sol)


# -- MSA -----------------------------------------------------------------------------

@dataclass
class MSAConfig:
    T_cvg: int = 5
    epsilon: float | None = None
    epsilon_frac: float = 0.01
    max_iters: int = 100
    seed: int = 0
    p0: PathShares | None = None
    d0: DemandMatrix | None = None
    tol: float = SOLVE_TOL


@dataclass
class MSAState:
    t: int
    p: PathShares
    d: DemandMatrix
    history: list = field(default_factory=list)
    T_cvg: int = 5
    epsilon: float = 0.0


@dataclass
class MSAResult:
    shares: PathShares
    converged: bool
    iterations: int
    t_star: int
    epsilon: float
    trace: list
    shares_history: list
    final_linearization: LinearizationResult
    seconds: float

    @property
    def Z_history(self) -> list:
        return [row["Z"] for row in self.trace]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ("t", "Z", "rc_objective", "wd_objective", "max_share_change", "rc_status")
        w.writerow(cols)
        for row in self.trace:
            w.writerow([row["t"], f"{row['Z']:.6f}", f"{row['rc_objective']:.6f}",
                        f"{row['wd_objective']:.6f}", f"{row['max_share_change']:.9f}", row["rc_status"]])
        return buf.getvalue()


def converged(history, T_cvg: int, epsilon: float) -> bool:
    """|Z_t - mean(Z_{t-T}..Z_{t-1})| <= epsilon, checked once T previous values exist."""
    t = len(history) - 1
    if t < T_cvg:
        return False
    return abs(history[t] - float(np.mean(history[t - T_cvg:t]))) <= epsilon


def msa_run(scenario: Scenario, incident: Incident | Mapping | None, model: UncertaintyModel,
            config: MSAConfig | None = None, probs: Mapping | None = None) -> MSAResult:
    """Alternate Sim-FOA, RC and WD with 1/(t+1) averaging of the shares.

    ``incident`` may be a single Incident or a mapping name -> Incident, in which case
    ``probs`` gives the scenario probabilities and the gradient is their expectation.
    """
    cfg = config or MSAConfig()
    index = scenario.index
    model.check_index(index)
    if isinstance(incident, Mapping):
        if probs is None:
            raise ValidationError("scenario probabilities required with several incidents")
        nets = {k: compile_network(scenario, inc) for k, inc in incident.items()}
    else:
        nets = {"": compile_network(scenario, incident)}
        probs = {"": 1.0}
    p = cfg.p0 if cfg.p0 is not None else PathShares.normalized(np.ones(len(index.F)), index)
    p.check(index)
    d = cfg.d0 if cfg.d0 is not None else DemandMatrix.from_vector(model.d_bar, index)
    state = MSAState(0, p, d, [], cfg.T_cvg, 0.0)
    trace, shares_hist = [], []
    t0 = time.perf_counter()
    lin = None
    done = False
    while True:
        t = state.t
        recs = {k: simulate(net, state.d, state.p, cfg.seed) for k, net in nets.items()}
        lin = expected_linearization({k: linearize(r) for k, r in recs.items()}, probs)
        Z = lin.Z_tilde
        state.history.append(Z)
        shares_hist.append(state.p)
        if t == 0:
            state.epsilon = cfg.epsilon if cfg.epsilon is not None else cfg.epsilon_frac * abs(Z)
        if converged(state.history, cfg.T_cvg, state.epsilon):
            done = True
        if done or t >= cfg.max_iters:
            trace.append({"t": t, "Z": Z, "rc_objective": float("nan"), "wd_objective": float("nan"),
                          "max_share_change": 0.0, "rc_status": ""})
            break
        rc = solve_rc(lin, model, index, cfg.tol)
        step = 1.0 / (t + 1)
        p_new = PathShares(step * rc.shares.values + (1.0 - step) * state.p.values)
        wd = solve_wd(p_new, lin, model, index, cfg.tol)
        trace.append({"t": t, "Z": Z, "rc_objective": rc.objective, "wd_objective": wd.objective,
                      "max_share_change": float(np.max(np.abs(p_new.values - state.p.values))),
                      "rc_status": rc.solution.status})
        log.info("MSA t=%d Z=%.1f RC=%.1f WD=%.1f", t, Z, rc.objective, wd.objective)
        state.p, state.d, state.t = p_new, wd.demand, t + 1
    hist = state.history
    lo = max(0, len(hist) - 1 - cfg.T_cvg)
    t_star = lo + int(np.argmin(hist[lo:]))
    return MSAResult(shares_hist[t_star], done, state.t, t_star, state.epsilon, trace, shares_hist,
                     lin, time.perf_counter() - t0)
