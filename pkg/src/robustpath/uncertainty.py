"""Demand uncertainty set: ellipsoid plus three polyhedra around the nominal demand.

With d = d_bar + D z the set is

    Z_E  : ||z||_2 <= rho
    Z_P1 : d_L - d_bar <= D z <= d_U - d_bar
    Z_P2 : dH_L - S d_bar <= S D z <= dH_U - S d_bar
    Z_P3 : 1'D z <= (Gamma - 1) 1'd_bar
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .model import DemandMatrix, RecommendationIndex, ValidationError
from .simulator.core import substream

log = logging.getLogger(__name__)

RHO_GRID = (0.0, 0.25, 0.52, 0.84, 1.28, 1.64, 2.33)
DEFAULT_GAMMA = 1.1
BOUND_WIDEN = 0.5


def aggregation_matrix(n_intervals: int, n_od: int) -> np.ndarray:
    """S with S[h, h'k] = 1 iff h = h' (h-major cell order)."""
    return np.kron(np.eye(n_intervals), np.ones((1, n_od)))


@dataclass(frozen=True)
class UncertaintyModel:
    d_bar: np.ndarray
    D: np.ndarray
    d_L: np.ndarray
    d_U: np.ndarray
    dH_L: np.ndarray
    dH_U: np.ndarray
    S: np.ndarray
    Gamma: float
    rho: float
    ridge: float = 0.0

    def __post_init__(self):
        n = len(self.d_bar)
        if self.D.shape != (n, n):
            raise ValidationError("D must be square with the dimension of d_bar")
        if not np.allclose(self.D, np.tril(self.D)) or np.any(np.diag(self.D) < 0):
            raise ValidationError("D must be lower-triangular with a nonnegative diagonal")
        if self.rho < 0 or self.Gamma <= 0:
            raise ValidationError("need rho >= 0 and Gamma > 0")
        if np.any(self.d_L > self.d_bar) or np.any(self.d_bar > self.d_U):
            raise ValidationError("d_L <= d_bar <= d_U violated")
        Sd = self.S @ self.d_bar
        if np.any(self.dH_L > Sd + 1e-9) or np.any(Sd > self.dH_U + 1e-9):
            raise ValidationError("dH_L <= S d_bar <= dH_U violated")

    @property
    def dim(self) -> int:
        return len(self.d_bar)

    @property
    def covariance(self) -> np.ndarray:
        return self.D @ self.D.T

    def with_rho(self, rho: float) -> "UncertaintyModel":
        return UncertaintyModel(self.d_bar, self.D, self.d_L, self.d_U, self.dH_L, self.dH_U,
                                self.S, self.Gamma, float(rho), self.ridge)

    def with_gamma(self, gamma: float) -> "UncertaintyModel":
        return UncertaintyModel(self.d_bar, self.D, self.d_L, self.d_U, self.dH_L, self.dH_U,
                                self.S, float(gamma), self.rho, self.ridge)

    def polyhedron(self) -> tuple[np.ndarray, np.ndarray]:
        """(P, q) with Z_P1 n Z_P2 n Z_P3 = {z : P z <= q}."""
        D, S, db = self.D, self.S, self.d_bar
        SD = S @ D
        P = np.vstack([D, -D, SD, -SD, np.ones((1, self.dim)) @ D])
        q = np.concatenate([self.d_U - db, db - self.d_L, self.dH_U - S @ db, S @ db - self.dH_L,
                            [(self.Gamma - 1.0) * db.sum()]])
        return P, q

    def to_json(self) -> dict:
        return {"d_bar": self.d_bar.tolist(), "D": self.D.tolist(), "d_L": self.d_L.tolist(),
                "d_U": self.d_U.tolist(), "dH_L": self.dH_L.tolist(), "dH_U": self.dH_U.tolist(),
                "n_intervals": int(self.S.shape[0]), "Gamma": self.Gamma, "rho": self.rho,
                "ridge": self.ridge}

    @classmethod
    def from_json(cls, data: dict) -> "UncertaintyModel":
        allowed = {"d_bar", "D", "d_L", "d_U", "dH_L", "dH_U", "n_intervals", "Gamma", "rho", "ridge"}
        extra = set(data) - allowed
        if extra:
            raise ValidationError(f"uncertainty model: unknown fields {sorted(extra)}")
        d_bar = np.asarray(data["d_bar"], dtype=float)
        nh = int(data["n_intervals"])
        if len(d_bar) % nh:
            raise ValidationError("uncertainty model: dimension not divisible by n_intervals")
        return cls(d_bar, np.asarray(data["D"], dtype=float), np.asarray(data["d_L"], dtype=float),
                   np.asarray(data["d_U"], dtype=float), np.asarray(data["dH_L"], dtype=float),
                   np.asarray(data["dH_U"], dtype=float), aggregation_matrix(nh, len(d_bar) // nh),
                   float(data["Gamma"]), float(data["rho"]), float(data.get("ridge", 0.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def check_index(self, index: RecommendationIndex) -> None:
        if self.dim != index.n_cells or self.S.shape[0] != index.n_intervals:
            raise ValidationError("uncertainty model does not match the recommendation index")


def generate_synthetic_samples(baseline_days: Sequence[DemandMatrix], leave_lo: float = 0.1,
                               leave_hi: float = 0.3, seed: int = 0) -> list[DemandMatrix]:
    """Scale every (h, k) of every day by (1 - u), u ~ U(leave_lo, leave_hi)."""
    if not baseline_days:
        raise ValidationError("no baseline days given")
    if not 0 <= leave_lo <= leave_hi < 1:
        raise ValidationError("need 0 <= leave_lo <= leave_hi < 1")
    out = []
    for i, day in enumerate(baseline_days):
        u = substream(seed, "synthetic_samples", i).uniform(leave_lo, leave_hi, day.values.shape)
        if leave_lo == leave_hi:
            u = np.full(day.values.shape, leave_lo)
        out.append(DemandMatrix(day.values * (1.0 - u)))
    return out


def regularized_cholesky(sigma: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky of sigma + lam I with lam = 1e-6 trace/dim, raised x10 until it succeeds."""
    n = sigma.shape[0]
    lam = 1e-6 * np.trace(sigma) / n
    if lam <= 0:
        lam = 1e-6
    for _ in range(40):
        try:
            return np.linalg.cholesky(sigma + lam * np.eye(n)), lam
        except np.linalg.LinAlgError:
            lam *= 10.0
    raise ValidationError("covariance not positive definite after regularization")


def fit(samples: Sequence[DemandMatrix], rho: float = 0.0, Gamma: float = DEFAULT_GAMMA) -> UncertaintyModel:
    if len(samples) < 2:
        raise ValidationError("fit needs at least 2 samples")
    X = np.stack([s.vector() for s in samples])
    nh = samples[0].values.shape[0]
    nk = samples[0].values.shape[1]
    d_bar = X.mean(axis=0)
    sigma = np.cov(X, rowvar=False, ddof=1).reshape(len(d_bar), len(d_bar))
    D, lam = regularized_cholesky(sigma)
    d_L, d_U = X.min(axis=0), X.max(axis=0)
    flat = d_L >= d_U
    d_L = np.where(flat, d_L - BOUND_WIDEN, d_L)
    d_U = np.where(flat, d_U + BOUND_WIDEN, d_U)
    S = aggregation_matrix(nh, nk)
    tot = X @ S.T
    dH_L, dH_U = tot.min(axis=0), tot.max(axis=0)
    flat = dH_L >= dH_U
    dH_L = np.where(flat, dH_L - BOUND_WIDEN, dH_L)
    dH_U = np.where(flat, dH_U + BOUND_WIDEN, dH_U)
    return UncertaintyModel(d_bar, D, d_L, d_U, dH_L, dH_U, S, float(Gamma), float(rho), lam)


def realize(model: UncertaintyModel, z: np.ndarray, index: RecommendationIndex | None = None) -> DemandMatrix:
    """d = d_bar + D z, negative entries clamped to 0 with a warning."""
    z = np.asarray(z, dtype=float)
    if z.shape != (model.dim,):
        raise ValidationError(f"z has shape {z.shape}, expected ({model.dim},)")
    d = model.d_bar + model.D @ z
    neg = d < 0
    if neg.any():
        log.warning("realized demand negative in %d cells (min %.3g); clamped to 0", int(neg.sum()), d.min())
        d = np.where(neg, 0.0, d)
    nh = model.S.shape[0]
    return DemandMatrix(d.reshape(nh, -1))


def membership(model: UncertaintyModel, z: np.ndarray, tol: float = 1e-9) -> dict:
    """In/out per set with the smallest slack of its rows (negative = violated)."""
    z = np.asarray(z, dtype=float)
    Dz = model.D @ z
    S = model.S
    sl = {
        "Z_E": model.rho - float(np.linalg.norm(z)),
        "Z_P1": float(min(np.min(model.d_U - model.d_bar - Dz), np.min(Dz - (model.d_L - model.d_bar)))),
        "Z_P2": float(min(np.min(model.dH_U - S @ model.d_bar - S @ Dz),
                          np.min(S @ Dz - (model.dH_L - S @ model.d_bar)))),
        "Z_P3": float((model.Gamma - 1.0) * model.d_bar.sum() - Dz.sum()),
    }
    return {k: {"inside": v >= -tol, "slack": v} for k, v in sl.items()}


@dataclass(frozen=True)
class MardiaResult:
    skewness: float
    kurtosis: float
    skewness_stat: float
    kurtosis_stat: float
    skewness_p: float
    kurtosis_p: float
    dim: int
    n: int
    aggregated: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def mardia_statistics(samples, n_intervals: int | None = None) -> MardiaResult:
    """Mardia's multivariate skewness b1 and kurtosis b2 with asymptotic p-values.

    ``samples`` is an (n, p) array or a list of DemandMatrix. When n <= p the test runs
    on per-interval totals instead (requires DemandMatrix input or ``n_intervals``).
    """
    aggregated = False
    if len(samples) and isinstance(samples[0], DemandMatrix):
        X = np.stack([s.vector() for s in samples])
        n_intervals = samples[0].values.shape[0]
    else:
        X = np.asarray(samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
    n, p = X.shape
    if n < 3:
        raise ValidationError("Mardia statistics need at least 3 samples")
    if n <= p:
        if n_intervals is None:
            raise ValidationError("fewer samples than dimensions and no interval structure given")
        X = X @ aggregation_matrix(n_intervals, p // n_intervals).T
        n, p = X.shape
        aggregated = True
        if n <= p:
            raise ValidationError("still fewer samples than dimensions after aggregation")
    Xc = X - X.mean(axis=0)
    Sb = Xc.T @ Xc / n
    try:
        G = Xc @ np.linalg.solve(Sb, Xc.T)
    except np.linalg.LinAlgError:
        raise ValidationError("singular covariance in Mardia test") from None
    b1 = float((G ** 3).sum() / n ** 2)
    b2 = float((np.diag(G) ** 2).sum() / n)
    skew_stat = n * b1 / 6.0
    dof = p * (p + 1) * (p + 2) / 6.0
    kurt_stat = (b2 - p * (p + 2)) / np.sqrt(8.0 * p * (p + 2) / n)
    return MardiaResult(b1, b2, skew_stat, float(kurt_stat), float(stats.chi2.sf(skew_stat, dof)),
                        float(2 * stats.norm.sf(abs(kurt_stat))), p, n, aggregated)
