"""Rearrangement algorithm for lower bounds on worst-case aggregate riskmetrics.

Every column of the matrix holds discretised quantiles of one weighted marginal;
a row is one joint scenario.  Any permutation of the columns is a feasible
coupling, so the riskmetric of the resulting row sums is a lower bound on the
worst case over all couplings.  Rearranging each column oppositely to the sum
of the others pushes the row sums towards a constant: on an upper tail grid
this maximises the smallest row sum, i.e. the VaR of the aggregate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distortion import DistortionFunction, DomainError
from .quantile import Discrete, QuantileModel, rho


@dataclass(frozen=True)
class RAParams:
    N: int = 10_000
    eps: float = 1e-6  # relative improvement threshold over a full sweep
    max_sweeps: int = 200
    seed: int = 0
    mode: str = "full"  # "full" or "tail"
    alpha: float = 0.95  # tail level for mode="tail"
    # full mode: levels above 1 - body_top stay comonotonic; 0 mixes the whole range
    body_top: float = 0.0


@dataclass
class RAMatrix:
    values: np.ndarray  # N x n
    levels: np.ndarray  # probability level of each row before rearrangement
    mode: str
    alpha: float | None = None

    @property
    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


@dataclass
class RAResult:
    matrix: RAMatrix
    converged: bool
    sweeps: int
    history: list = field(default_factory=list)


def grid_levels(N: int, mode: str = "full", alpha: float = 0.95) -> np.ndarray:
    if N < 2:
        raise DomainError("need N >= 2")
    k = np.arange(N) + 0.5
    if mode == "full":
        return k / N
    if mode == "tail":
        return alpha + k * (1.0 - alpha) / N
    raise ValueError(f"unknown mode {mode!r}")


def discretize(
    marginals: Sequence[QuantileModel], weights: Sequence[float], N: int, mode: str = "full", alpha: float = 0.95
) -> RAMatrix:
    """Weighted mid-grid quantiles a_i F_i^{-1}(u_k), one column per marginal."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(marginals):
        raise DomainError("weights and marginals differ in length")
    if np.any(weights < 0):
        raise DomainError("weights must be non-negative")
    levels = grid_levels(N, mode, alpha)
    cols = []
    for w, F in zip(weights, marginals):
        q = F.quantiles(levels)
        if not np.all(np.isfinite(q)):
            raise DomainError("unbounded quantile on the sampling grid")
        cols.append(w * q)
    return RAMatrix(np.column_stack(cols), levels, mode, alpha if mode == "tail" else None)


def _objective(values: np.ndarray, mode: str) -> float:
    sums = values.sum(axis=1)
    if mode == "tail":
        return float(sums.min())
    return -float(sums.var())


def rearrange_block(values: np.ndarray, rng: np.random.Generator, eps: float, max_sweeps: int, mode: str):
    """Core RA loop on a block of rows; columns are shuffled once first."""
    X = values.copy()
    N, n = X.shape
    history = []
    if n == 1:
        return X, True, 0, history
    for j in range(n):
        X[:, j] = X[rng.permutation(N), j]
    total = X.sum(axis=1)
    obj = _objective(X, mode)
    history.append(obj)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for j in range(n):
            others = total - X[:, j]
            order = np.argsort(others, kind="stable")
            col = np.sort(X[:, j])[::-1]
            new = np.empty_like(col)
            new[order] = col
            X[:, j] = new
            total = others + new
        new_obj = _objective(X, mode)
        history.append(new_obj)
        if abs(new_obj - obj) <= eps * max(1.0, abs(obj)):
            converged = True
            break
        obj = new_obj
    return X, converged, sweeps, history


def ra_iterate(M: RAMatrix, eps: float = 1e-6, max_sweeps: int = 200, seed: int = 0, body_top: float = 0.0) -> RAResult:
    """Oppositely order each column against the sum of the others until a sweep gains less than eps.

    With ``body_top = t`` in full mode only rows with level below 1 - t are
    rearranged; the upper rows keep their comonotonic order.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    rng = np.random.default_rng(seed)
    values = M.values
    if M.mode == "full" and body_top > 0.0:
        body = M.levels < 1.0 - body_top
        X_body, conv, sweeps, hist = rearrange_block(values[body], rng, eps, max_sweeps, "full")
        X = values.copy()
        X[body] = X_body
    else:
        X, conv, sweeps, hist = rearrange_block(values, rng, eps, max_sweeps, M.mode)
    return RAResult(RAMatrix(X, M.levels, M.mode, M.alpha), conv, sweeps, hist)


def ra_lower_bound(
    h: DistortionFunction | None,
    marginals: Sequence[QuantileModel],
    weights: Sequence[float],
    params: RAParams = RAParams(),
) -> float:
    """Riskmetric of the rearranged aggregate: a lower bound on its worst case.

    Tail mode returns the smallest tail row sum (the aggregate VaR at alpha).
    Full mode returns rho_h of the empirical law of the row sums.
    """
    M = discretize(marginals, weights, params.N, params.mode, params.alpha)
    res = ra_iterate(M, params.eps, params.max_sweeps, params.seed, params.body_top)
    sums = res.matrix.row_sums
    if params.mode == "tail":
        return float(sums.min())
    if h is None:
        raise DomainError("full mode needs a distortion function")
    return rho(h, Discrete(sums))


__all__ = [
    "RAParams",
    "RAMatrix",
    "RAResult",
    "grid_levels",
    "discretize",
    "ra_iterate",
    "ra_lower_bound",
]
