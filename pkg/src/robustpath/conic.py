"""Dense primal-dual interior-point solver for linear + second-order cone programs.

Standard form::

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in R^l_+ x Q^{q_1} x ... x Q^{q_k}

where Q^q = {(t, u) in R x R^{q-1} : ||u||_2 <= t}. The method is the homogeneous
self-dual embedding with Nesterov-Todd scaling and a Mehrotra predictor-corrector,
in the style of ECOS/CVXOPT, with dense factorizations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED, MAX_ITERS = "optimal", "infeasible", "unbounded", "max_iters"
STEP_FRACTION = 0.99


class ConicProgram:
    """Linear objective over free variables with box bounds, linear (in)equalities
    and second-order cone constraints on affine images of the variables."""

    def __init__(self, n: int, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.n = int(n)
        self.sense = sense
        self.c = np.zeros(self.n)
        self.c0 = 0.0
        self.lb = np.full(self.n, -np.inf)
        self.ub = np.full(self.n, np.inf)
        self._eq: list[tuple[np.ndarray, np.ndarray]] = []
        self._ineq: list[tuple[np.ndarray, np.ndarray]] = []
        self._soc: list[tuple[np.ndarray, np.ndarray]] = []

    def set_objective(self, c, constant: float = 0.0) -> "ConicProgram":
        self.c = np.asarray(c, dtype=float).reshape(self.n).copy()
        self.c0 = float(constant)
        return self

    def set_bounds(self, idx, lb=None, ub=None) -> "ConicProgram":
        if lb is not None:
            self.lb[idx] = lb
        if ub is not None:
            self.ub[idx] = ub
        return self

    def add_eq(self, A, b) -> "ConicProgram":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self._eq.append((A.reshape(-1, self.n), np.atleast_1d(np.asarray(b, dtype=float))))
        return self

    def add_ineq(self, G, h) -> "ConicProgram":
        """G x <= h."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        self._ineq.append((G.reshape(-1, self.n), np.atleast_1d(np.asarray(h, dtype=float))))
        return self

    def add_soc(self, t_coef, t_const, X, x_const) -> "ConicProgram":
        """|| X x + x_const ||_2 <= t_coef . x + t_const."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.n)
        Gb = -np.vstack([np.asarray(t_coef, dtype=float).reshape(1, self.n), X])
        hb = np.concatenate([[float(t_const)], np.broadcast_to(np.asarray(x_const, dtype=float), (X.shape[0],))])
        self._soc.append((Gb, hb))
        return self

    def standard_form(self):
        """(c, A, b, G, h, dims) with dims = {"l": int, "q": [sizes]}; c already in min sense."""
        n = self.n
        A = np.vstack([a for a, _ in self._eq]) if self._eq else np.zeros((0, n))
        b = np.concatenate([v for _, v in self._eq]) if self._eq else np.zeros(0)
        I = np.eye(n)
        lo = np.flatnonzero(np.isfinite(self.lb))
        hi = np.flatnonzero(np.isfinite(self.ub))
        Gl = [g for g, _ in self._ineq] + [-I[lo], I[hi]]
        hl = [v for _, v in self._ineq] + [-self.lb[lo], self.ub[hi]]
        Gq = [g for g, _ in self._soc]
        hq = [v for _, v in self._soc]
        G = np.vstack(Gl + Gq)
        h = np.concatenate(hl + hq)
        dims = {"l": int(sum(len(v) for v in hl)), "q": [len(v) for v in hq]}
        c = -self.c if self.sense == "max" else self.c.copy()
        return c, A, b, G, h, dims

    def dump(self) -> str:
        """Plain-text standard form for cross-checking against other solvers."""
        c, A, b, G, h, dims = self.standard_form()
        out = [f"# minimize c'x s.t. Ax=b, Gx+s=h, s in K; sense={self.sense} constant={self.c0!r}",
               f"n {len(c)}", f"p {A.shape[0]}", f"m {G.shape[0]}",
               f"l {dims['l']}", "q " + " ".join(map(str, dims["q"])),
               "c " + " ".join(repr(float(v)) for v in c)]
        for name, M, r in (("A", A, b), ("G", G, h)):
            for i in range(M.shape[0]):
                nz = np.flatnonzero(M[i])
                out.append(f"{name} {i} {r[i]!r} " + " ".join(f"{j}:{M[i, j]!r}" for j in nz))
        return "\n".join(out) + "\n"


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else np.inf


class _Cones:
    """Jordan-algebra helpers for R^l_+ x Q^{q_1} x ..."""

    def __init__(self, dims):
        self.l = int(dims["l"])
        self.q = [int(k) for k in dims["q"]]
        self.blocks = []
        o = self.l
        for k in self.q:
            self.blocks.append(slice(o, o + k))
            o += k
        self.m = o
        self.degree = self.l + len(self.q)
        self.e = np.zeros(self.m)
        self.e[:self.l] = 1.0
        for b in self.blocks:
            self.e[b.start] = 1.0

    def prod(self, u, v):
        out = np.empty(self.m)
        out[:self.l] = u[:self.l] * v[:self.l]
        for b in self.blocks:
            ub, vb = u[b], v[b]
            out[b.start] = ub @ vb
            out[b.start + 1:b.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def div(self, lam, d):
        """Solve lam o u = d for u."""
        out = np.empty(self.m)
        out[:self.l] = d[:self.l] / lam[:self.l]
        for b in self.blocks:
            l0, l1 = lam[b.start], lam[b.start + 1:b.stop]
            d0, d1 = d[b.start], d[b.start + 1:b.stop]
            det = _jdet(lam[b])
            u0 = (l0 * d0 - l1 @ d1) / det
            out[b.start] = u0
            out[b.start + 1:b.stop] = (d1 - l1 * u0) / l0
        return out

    def shift_interior(self, u):
        """u + (1 + a) e when u is not strictly inside the cone, where a = min{a : u + a e in K}."""
        a = -np.inf
        if self.l:
            a = max(a, float(np.max(-u[:self.l])))
        for b in self.blocks:
            a = max(a, float(np.linalg.norm(u[b.start + 1:b.stop]) - u[b.start]))
        return u.copy() if a < 0 else u + (1.0 + a) * self.e

    def max_step(self, u, du):
        """Largest a in (0, inf) with u + a du in K (u strictly interior)."""
        a = np.inf
        if self.l:
            neg = du[:self.l] < 0
            if neg.any():
                a = min(a, float(np.min(-u[:self.l][neg] / du[:self.l][neg])))
        for b in self.blocks:
            a = min(a, _soc_step(u[b], du[b]))
        return a

    def scaling(self, s, z):
        """NT scaling W (block diagonal, symmetric) with W z = W^{-1} s = lambda."""
        W = np.zeros((self.m, self.m))
        Winv = np.zeros((self.m, self.m))
        d = np.sqrt(s[:self.l] / z[:self.l])
        idx = np.arange(self.l)
        W[idx, idx] = d
        Winv[idx, idx] = 1.0 / d
        for b in self.blocks:
            sb, zb = s[b], z[b]
            sn = np.sqrt(_jdet(sb))
            zn = np.sqrt(_jdet(zb))
            sbar, zbar = sb / sn, zb / zn
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            w = sbar.copy()
            w[0] += zbar[0]
            w[1:] -= zbar[1:]
            w /= 2.0 * gamma
            eta = np.sqrt(sn / zn)
            w0, w1 = w[0], w[1:]
            M = np.empty((len(w), len(w)))
            M[0, 0] = w0
            M[0, 1:] = w1
            M[1:, 0] = w1
            M[1:, 1:] = np.eye(len(w1)) + np.outer(w1, w1) / (1.0 + w0)
            W[b, b] = eta * M
            M[0, 1:] = -w1
            M[1:, 0] = -w1
            Winv[b, b] = M / eta
        return W, Winv


def _jdet(u):
    """u0^2 - ||u1||^2 without cancellation near the boundary."""
    r = np.linalg.norm(u[1:])
    return max((u[0] - r) * (u[0] + r), 1e-300)


def _soc_step(u, du):
    c = _jdet(u)
    bq = 2.0 * (u[0] * du[0] - u[1:] @ du[1:])
    a = du[0] ** 2 - du[1:] @ du[1:]
    roots = []
    if abs(a) < 1e-300:
        if bq < 0:
            roots.append(-c / bq)
    else:
        disc = bq * bq - 4 * a * c
        if disc >= 0:
            sq = np.sqrt(disc)
            # numerically stable pair
            qv = -0.5 * (bq + np.copysign(sq, bq))
            for r in (qv / a, c / qv if qv != 0 else np.inf):
                if r > 0:
                    roots.append(r)
    cand = [r for r in roots if np.isfinite(r) and r > 0]
    # also stop before the t-component goes negative
    if du[0] < 0:
        cand.append(-u[0] / du[0])
    return min(cand) if cand else np.inf


def solve(program: ConicProgram, tol: float = 1e-8, max_iters: int = 100) -> ConicSolution:
    """Solve ``program``; status is optimal only when every residual is <= ``tol``."""
    c, A, b, G, h, dims = program.standard_form()
    sol = solve_standard(c, A, b, G, h, dims, tol=tol, max_iters=max_iters)
    sign = -1.0 if program.sense == "max" else 1.0
    sol.objective = sign * sol.objective + program.c0 if np.isfinite(sol.objective) else sol.objective
    return sol


def solve_standard(c, A, b, G, h, dims, tol=1e-8, max_iters=100) -> ConicSolution:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    b = np.asarray(b, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, len(c))
    h = np.asarray(h, dtype=float)
    K = _Cones(dims)
    n, p, m = len(c), A.shape[0], G.shape[0]
    if m != K.m or m == 0:
        raise ValueError("cone dimensions do not match G, or there are no cone constraints")

    # objective normalization keeps the iterates of c and t*c identical
    cscale = max(1.0, float(np.max(np.abs(c)))) if n else 1.0
    cs = c / cscale
    nb, nh, nc = np.max(np.abs(b), initial=0.0), np.max(np.abs(h), initial=0.0), np.max(np.abs(c), initial=0.0)

    kkt = _KKT(A, G, K)
    # initial point: least-squares primal/dual, then pushed into the cone
    kkt.factor(np.eye(m))
    x, _, r = kkt.solve(np.zeros(n), b, h)
    s = K.shift_interior(-r)
    _, y, zr = kkt.solve(-cs, np.zeros(p), np.zeros(m))
    z = K.shift_interior(zr)
    tau, kappa = 1.0, 1.0

    best = None
    status = MAX_ITERS
    it = 0
    for it in range(max_iters + 1):
        rx = A.T @ y + G.T @ z + cs * tau
        ry = -A @ x + b * tau
        rz = s + G @ x - h * tau
        rt = kappa + cs @ x + b @ y + h @ z

        xt, yt, zt, st = x / tau, y / tau, z / tau, s / tau
        res = _residuals(c, A, b, G, h, xt, yt * cscale, zt * cscale, st, nb, nh, nc)
        if best is None or max(res.values()) < max(best[1].values()):
            best = ((xt.copy(), yt * cscale, zt * cscale, st.copy()), res)
        if max(res.values()) <= tol:
            status = OPTIMAL
            break
        # infeasibility certificates
        hz_by = h @ z + b @ y
        if hz_by < 0 and tau < 1e-6 * kappa and np.max(np.abs(A.T @ y + G.T @ z)) <= tol * -hz_by:
            status = INFEASIBLE
            break
        cx = cs @ x
        if cx < 0:
            pr = max(np.max(np.abs(A @ x), initial=0.0), np.max(np.abs(G @ x + s)))
            if pr <= tol * -cx and tau < 1e-6 * kappa:
                status = UNBOUNDED
                break
        if it == max_iters:
            break

        W, Winv = K.scaling(s, z)
        lam = W @ z
        mu = (s @ z + tau * kappa) / (K.degree + 1)
        try:
            kkt.factor(W @ W)
        except np.linalg.LinAlgError:
            log.warning("KKT factorization failed at iteration %d", it)
            break
        x2, y2, z2 = kkt.solve(-cs, b, h)
        denom = cs @ x2 + b @ y2 + h @ z2 - kappa / tau

        def direction(sigma, ds, dk):
            q = 1.0 - sigma
            rhs_z = -q * rz - W @ K.div(lam, ds)
            x1, y1, z1 = kkt.solve(-q * rx, q * ry, rhs_z)
            dtau = (-q * rt - dk / tau - (cs @ x1 + b @ y1 + h @ z1)) / denom
            dx, dy, dz = x1 + dtau * x2, y1 + dtau * y2, z1 + dtau * z2
            dsv = W @ (K.div(lam, ds) - W @ dz)
            dkap = (dk - kappa * dtau) / tau
            return dx, dy, dz, dsv, dtau, dkap

        def step(dz, dsv, dtau, dkap):
            a = min(K.max_step(s, dsv), K.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        ds_aff = -K.prod(lam, lam)
        dk_aff = -kappa * tau
        aff = direction(0.0, ds_aff, dk_aff)
        a_aff = min(1.0, step(aff[2], aff[3], aff[4], aff[5]))
        sigma = float(np.clip((1.0 - a_aff) ** 3, 0.0, 1.0))
        corr = K.prod(Winv @ aff[3], W @ aff[2])
        ds = ds_aff - corr + sigma * mu * K.e
        dk = dk_aff - aff[5] * aff[4] + sigma * mu
        dx, dy, dz, dsv, dtau, dkap = direction(sigma, ds, dk)
        a = min(1.0, STEP_FRACTION * step(dz, dsv, dtau, dkap))
        log.debug("it=%d res=%s tau=%.3g kappa=%.3g mu=%.3g a_aff=%.3g a=%.3g sigma=%.3g",
                  it, res, tau, kappa, mu, a_aff, a, sigma)
        x, y, z, s = x + a * dx, y + a * dy, z + a * dz, s + a * dsv
        tau, kappa = tau + a * dtau, kappa + a * dkap
        # rescale the embedding so tau stays O(1)
        nrm = max(tau, kappa, 1e-300)
        if nrm > 1e6 or nrm < 1e-6:
            x, y, z, s, tau, kappa = x / nrm, y / nrm, z / nrm, s / nrm, tau / nrm, kappa / nrm

    if status == OPTIMAL:
        xt, yt, zt, st = x / tau, y / tau * cscale, z / tau * cscale, s / tau
        obj = float(c @ xt)
    elif status in (INFEASIBLE, UNBOUNDED):
        xt, yt, zt, st = x, y * cscale, z * cscale, s
        res = _residuals(c, A, b, G, h, xt, yt, zt, st, nb, nh, nc)
        obj = np.inf if status == INFEASIBLE else -np.inf
    else:
        (xt, yt, zt, st), res = best
        obj = float(c @ xt)
    return ConicSolution(status, xt, yt, zt, st, obj, res, it)


def _residuals(c, A, b, G, h, x, y, z, s, nb, nh, nc):
    """Relative residuals, each normalized by the size of the terms it balances."""
    inf = lambda v: float(np.max(np.abs(v), initial=0.0))
    Gx = G @ x
    pr = inf(Gx + s - h) / (1.0 + max(inf(Gx), inf(s), nh))
    if A.shape[0]:
        Ax = A @ x
        pr = max(pr, inf(Ax - b) / (1.0 + max(inf(Ax), nb)))
    Aty, Gtz = A.T @ y, G.T @ z
    dr = inf(Aty + Gtz + c) / (1.0 + max(inf(Aty), inf(Gtz), nc))
    pcost = float(c @ x)
    dcost = -float(b @ y) - float(h @ z)
    gap = abs(pcost - dcost) / (1.0 + max(abs(pcost), abs(dcost)))
    return {"primal": float(pr), "dual": float(dr), "gap": float(gap)}


class _KKT:
    """Solves [[0, A', G'], [A, 0, 0], [G, 0, -V]] [x; y; z] = [r1; r2; r3].

    The factorized matrix carries a small static regularization; iterative
    refinement against the exact system removes its effect.
    """

    DELTA = 1e-9

    def __init__(self, A, G, cones):
        self.A, self.G, self.K = A, G, cones
        self.n, self.p, self.m = G.shape[1], A.shape[0], G.shape[0]

    def factor(self, V):
        n, p, m = self.n, self.p, self.m
        N = n + p + m
        M = np.zeros((N, N))
        M[:n, n:n + p] = self.A.T
        M[:n, n + p:] = self.G.T
        M[n:n + p, :n] = self.A
        M[n + p:, :n] = self.G
        M[n + p:, n + p:] = -V
        self.M = M
        R = M.copy()
        d = np.arange(N)
        R[d[:n], d[:n]] += self.DELTA
        R[d[n:], d[n:]] -= self.DELTA
        self.lu = sla.lu_factor(R, check_finite=False)

    def solve(self, r1, r2, r3, refine: int = 8):
        n, p = self.n, self.p
        rhs = np.concatenate([r1, r2, r3])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        bnd = 1e-14 * (1.0 + np.max(np.abs(rhs)))
        for _ in range(refine):
            err = rhs - self.M @ sol
            if np.max(np.abs(err)) <= bnd:
                break
            sol = sol + sla.lu_solve(self.lu, err, check_finite=False)
        return sol[:n], sol[n:n + p], sol[n + p:]
