"""Outer minimisation over portfolio weights.

Three problem families share the action set A_{a,b} = [a, b]^n cut by the unit
simplex:

* mean-covariance uncertainty with one distortion (difference of TK),
* mean-covariance uncertainty with a family of TK distortions (preference robust),
* marginal (Frechet class) uncertainty, solved as a convex program through the
  concave envelope or bounded from below by the rearrangement algorithm.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

from .distortion import DistortionFunction, DomainError, combine, make_tk
from .envelope import concave_envelope
from .moments import MomentConstraint, q_norm
from .quantile import Discrete, QuantileModel, rho
from .rearrange import RAParams, grid_levels, ra_lower_bound

PSD_TOL = 1e-10
BENCHMARK_GAMMA = 0.71


# ---------------------------------------------------------------------------
# problem and report types
# ---------------------------------------------------------------------------


def check_psd(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError("covariance must be a square matrix")
    if not np.allclose(S, S.T, atol=1e-12):
        raise DomainError("covariance must be symmetric")
    if np.linalg.eigvalsh(S).min() < -PSD_TOL:
        raise DomainError("covariance is not positive semidefinite")
    return S


def check_box(n: int, lo: float, hi: float) -> None:
    if n < 1:
        raise DomainError("need at least one asset")
    if lo < 0.0 or hi > 1.0 or lo > hi:
        raise DomainError(f"box [{lo}, {hi}] must lie inside [0, 1]")
    if lo * n > 1.0 + 1e-12 or hi * n < 1.0 - 1e-12:
        raise DomainError(f"box [{lo}, {hi}] does not meet the simplex for n={n}")


@dataclass
class PortfolioProblem:
    n: int
    lo: float = 0.0
    hi: float = 1.0
    c: float = 0.0  # penalty scale of c ||a||_2
    mu: np.ndarray | None = None
    Sigma: np.ndarray | None = None
    marginals: Sequence[QuantileModel] | None = None
    h: DistortionFunction | None = None

    def __post_init__(self):
        check_box(self.n, self.lo, self.hi)
        if self.c < 0:
            raise DomainError("penalty scale must be non-negative")
        if self.Sigma is not None:
            self.Sigma = check_psd(self.Sigma)
            if self.Sigma.shape[0] != self.n:
                raise DomainError("covariance has the wrong size")
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)
            if self.mu.shape != (self.n,):
                raise DomainError("mean vector has the wrong size")
        if self.marginals is not None and len(self.marginals) != self.n:
            raise DomainError("need one marginal per asset")

    def feasible(self, a, tol: float = 1e-9) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(abs(a.sum() - 1.0) <= tol and np.all(a >= self.lo - tol) and np.all(a <= self.hi + tol))


@dataclass
class SolveReport:
    weights: np.ndarray
    value: float
    inner: dict = field(default_factory=dict)  # e.g. {"gamma": ...}
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "weights": [float(x) for x in self.weights],
            "value": float(self.value),
            "inner": dict(self.inner),
            "diagnostics": dict(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# simplex-box geometry
# ---------------------------------------------------------------------------


def project_simplex_box(y, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {a in [lo, hi]^n : sum a = 1}: clip(y - tau, lo, hi).

    s(tau) = sum clip(y - tau) is piecewise linear and non-increasing with kinks
    at y - lo and y - hi, so tau is found exactly between two kinks.
    """
    y = np.asarray(y, dtype=float)
    check_box(y.size, lo, hi)
    if not np.all(np.isfinite(y)):
        raise DomainError("projection of a non-finite point")
    y = y - y.max()  # the projection is invariant to shifts along the ones vector
    s = lambda tau: np.clip(y - tau, lo, hi).sum()
    knots = np.unique(np.concatenate([y - lo, y - hi]))
    vals = np.array([s(k) for k in knots])  # non-increasing in the knot
    i = np.searchsorted(-vals, -1.0, side="left")  # first knot with s <= 1
    if i == 0 or vals[i] == 1.0:
        tau = knots[i]
    else:
        t0, t1, s0, s1 = knots[i - 1], knots[i], vals[i - 1], vals[i]
        tau = t1 if s0 == s1 else t0 + (s0 - 1.0) * (t1 - t0) / (s0 - s1)
    a = np.clip(y - tau, lo, hi)
    free = (a > lo) & (a < hi)
    if free.any():
        a[free] = np.clip(a[free] + (1.0 - a.sum()) / free.sum(), lo, hi)
    return a


def reduce_mean_cov(a, mu, Sigma) -> MomentConstraint:
    """Aggregate a'X under mean mu and covariance bound Sigma: M^2(a'mu, sqrt(a'Sigma a))."""
    a = np.asarray(a, dtype=float)
    S = check_psd(Sigma)
    var = float(a @ S @ a)
    return MomentConstraint(2.0, float(a @ np.asarray(mu, dtype=float)), math.sqrt(max(var, 0.0)))


def min_variance(Sigma, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-14, max_iter: int = 100_000):
    """argmin a'Sigma a over the simplex-box by projected gradient with exact line search."""
    S = check_psd(Sigma)
    n = S.shape[0]
    a = project_simplex_box(np.full(n, 1.0 / n), lo, hi)
    L = max(np.linalg.eigvalsh(S).max(), 1e-12)
    it = 0
    for it in range(1, max_iter + 1):
        g = 2.0 * S @ a
        d = project_simplex_box(a - g / (2.0 * L), lo, hi) - a
        if np.linalg.norm(d) <= tol:
            break
        curv = float(d @ S @ d)
        slope = float(g @ d)
        if slope >= 0.0:  # no descent left at rounding level
            break
        t = 1.0 if curv <= 0 else min(1.0, -slope / (2.0 * curv))
        a = a + t * d
    return a, float(a @ S @ a), it


# ---------------------------------------------------------------------------
# mean-covariance problems
# ---------------------------------------------------------------------------


def diff_tk(gamma1: float, gamma2: float) -> DistortionFunction:
    return combine(make_tk(gamma1), make_tk(gamma2), op="difference")


def solve_diff_tk(Sigma, gamma1: float = 0.8, gamma2: float = 0.7, lo: float = 0.0, hi: float = 1.0) -> SolveReport:
    """min over a of [h*]_2 sqrt(a'Sigma a) with h = TK(gamma1) - TK(gamma2).

    The mean term drops out because h(1) = 0; the problem is a min-variance QP.
    """
    S = check_psd(Sigma)
    norm = q_norm(concave_envelope(diff_tk(gamma1, gamma2)).envelope, 2.0)
    a, var, it = min_variance(S, lo, hi)
    return SolveReport(a, norm * math.sqrt(max(var, 0.0)), {}, {"iterations": it, "norm": norm, "variance": var})


@lru_cache(maxsize=4096)
def tk_envelope_norm(gamma: float) -> float:
    """[(h^gamma)*]_2, cached per gamma."""
    return q_norm(concave_envelope(make_tk(gamma)).envelope, 2.0)


def gamma_penalty(gamma, c_pen: float, offset: float = 0.0):
    """e^{c (gamma - 0.71)^2} - offset."""
    return np.exp(c_pen * (np.asarray(gamma, dtype=float) - BENCHMARK_GAMMA) ** 2) - offset


def solve_pref_robust(
    mu,
    Sigma,
    c_pen: float,
    gamma_range: tuple[float, float] = (0.5, 0.9),
    grid: int = 401,
    penalty_offset: float = 0.0,
    lo: float = 0.0,
    hi: float = 1.0,
    refine: bool = True,
) -> SolveReport:
    """min_a max_gamma a'mu + sqrt(a'Sigma a) [(h^gamma)*]_2 - penalty(gamma).

    For fixed a the inner objective is affine in v = sqrt(a'Sigma a), so the
    outer problem is convex in a; it is solved in epigraph form over the gamma
    grid, after which the inner argmax is refined between its grid neighbours.
    """
    mu = np.asarray(mu, dtype=float)
    S = check_psd(Sigma)
    n = mu.size
    check_box(n, lo, hi)
    g_lo, g_hi = gamma_range
    if not 0.0 < g_lo <= g_hi < 1.0:
        raise DomainError("gamma range must lie inside (0, 1)")
    gammas = np.linspace(g_lo, g_hi, grid) if grid > 1 else np.array([g_lo])
    norms = np.array([tk_envelope_norm(float(g)) for g in gammas])
    pens = gamma_penalty(gammas, c_pen, penalty_offset)

    def inner(a):
        v = math.sqrt(max(float(a @ S @ a), 0.0))
        terms = -pens if v == 0.0 else v * norms - pens
        k = int(np.argmax(terms))
        return float(a @ mu + terms[k]), k

    a_mv, var_min, _ = min_variance(S, lo, hi)
    if not np.all(np.isfinite(norms)) and var_min > 1e-14:
        k = int(np.argmax(~np.isfinite(norms)))
        return SolveReport(a_mv, math.inf, {"gamma": float(gammas[k])}, {"reason": "divergent envelope norm"})
    finite = np.isfinite(norms)

    if var_min <= 1e-14 and not np.all(finite):
        a = a_mv
    else:
        a = _epigraph_minimize(mu, S, norms[finite], pens[finite], lo, hi, [a_mv, np.full(n, 1.0 / n)])
    value, k = inner(a)
    gamma = float(gammas[k])
    diag = {"grid": grid, "gamma_grid_index": k}
    if refine and grid > 1 and math.isfinite(value):
        v = math.sqrt(max(float(a @ S @ a), 0.0))
        left, right = gammas[max(k - 1, 0)], gammas[min(k + 1, grid - 1)]
        f = lambda g: -(v * tk_envelope_norm(float(g)) - float(gamma_penalty(g, c_pen, penalty_offset)))
        res = optimize.minimize_scalar(f, bounds=(left, right), method="bounded", options={"xatol": 1e-6})
        if res.success and -res.fun > value - float(a @ mu):
            gamma = float(res.x)
            value = float(a @ mu) - float(res.fun)
    return SolveReport(a, value, {"gamma": gamma}, diag)


def _epigraph_minimize(mu, S, norms, pens, lo, hi, starts) -> np.ndarray:
    """min t s.t. t >= a'mu + N_k sqrt(a'Sigma a) - pen_k for all k, a in the simplex-box."""
    n = mu.size
    N_, P_ = np.asarray(norms), np.asarray(pens)

    def sd(a):
        return math.sqrt(max(float(a @ S @ a), 1e-300))

    def obj(x):
        return x[-1]

    def cons(x):
        a = x[:-1]
        return x[-1] - a @ mu - N_ * sd(a) + P_

    def cons_jac(x):
        a = x[:-1]
        s = sd(a)
        grad_sd = (S @ a) / s
        J = np.empty((N_.size, n + 1))
        J[:, :-1] = -mu[None, :] - N_[:, None] * grad_sd[None, :]
        J[:, -1] = 1.0
        return J

    best = None
    for a0 in starts:
        a0 = project_simplex_box(a0, lo, hi)
        t0 = float(np.max(a0 @ mu + N_ * sd(a0) - P_))
        res = optimize.minimize(
            obj,
            np.append(a0, t0),
            jac=lambda x: np.append(np.zeros(n), 1.0),
            method="SLSQP",
            bounds=[(lo, hi)] * n + [(None, None)],
            constraints=[
                {"type": "ineq", "fun": cons, "jac": cons_jac},
                {"type": "eq", "fun": lambda x: x[:-1].sum() - 1.0, "jac": lambda x: np.append(np.ones(n), 0.0)},
            ],
            options={"ftol": 1e-14, "maxiter": 1000},
        )
        a = project_simplex_box(res.x[:-1], lo, hi)
        val = float(np.max(a @ mu + N_ * sd(a) - P_))
        if best is None or val < best[0] - 1e-13:
            best = (val, a)
    return best[1]


# ---------------------------------------------------------------------------
# marginal problems
# ---------------------------------------------------------------------------


def _lp_corner(r: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """min r'a over the simplex-box: fill the cheapest coordinates first (stable order)."""
    a = np.full(r.size, lo)
    left = 1.0 - a.sum()
    for i in np.argsort(r, kind="stable"):
        add = min(hi - lo, left)
        a[i] += add
        left -= add
        if left <= 0:
            break
    return a


def minimize_linear_l2(r, c: float, lo: float = 0.0, hi: float = 1.0) -> tuple[np.ndarray, float]:
    """argmin r'a + c ||a||_2 over the simplex-box.

    Stationarity gives a = P(-L r / c) with L = ||a||_2, P the simplex-box
    projection, so the solution is the fixed point of a scalar equation in L.
    """
    r = np.asarray(r, dtype=float)
    n = r.size
    check_box(n, lo, hi)
    if c == 0.0:
        a = _lp_corner(r, lo, hi)
        return a, float(r @ a)
    if c < 0:
        raise DomainError("penalty scale must be non-negative")
    with np.errstate(over="ignore"):
        huge = not np.all(np.isfinite(r / c))
    if huge:  # c is negligible against r
        a = _lp_corner(r, lo, hi)
        return a, float(r @ a + c * np.linalg.norm(a))
    phi = lambda L: np.linalg.norm(project_simplex_box(-L * r / c, lo, hi)) - L
    L_lo, L_hi = 1.0 / math.sqrt(n), 1.0
    if phi(L_lo) <= 0:
        L = L_lo
    elif phi(L_hi) >= 0:
        L = L_hi
    else:
        L = optimize.brentq(phi, L_lo, L_hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    a = project_simplex_box(-L * r / c, lo, hi)
    return a, float(r @ a + c * np.linalg.norm(a))


def kkt_residual(r, c: float, a, lo: float = 0.0, hi: float = 1.0) -> float:
    """Distance between a and its projected-gradient step, a stationarity measure."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(r, dtype=float) + (c * a / np.linalg.norm(a) if c > 0 else 0.0)
    return float(np.linalg.norm(project_simplex_box(a - g, lo, hi) - a))


def solve_marginal_convex(
    h: DistortionFunction,
    marginals: Sequence[QuantileModel],
    lo: float = 0.0,
    hi: float = 1.0,
    c: float = 0.0,
    grid: int | None = None,
) -> SolveReport:
    """min over A_{a,b} of sum a_i rho_h(F_i) + c ||a||_2 for concave h (comonotonic worst case).

    With ``grid = N`` each marginal is replaced by the uniform law on its N
    mid-grid quantiles, the same discretisation the rearrangement uses.
    """
    if not h.is_concave():
        raise DomainError("h must be concave; pass its concave envelope")
    n = len(marginals)
    check_box(n, lo, hi)
    t = time.perf_counter()
    if grid is not None:
        u = grid_levels(grid)
        marginals = [Discrete(F.quantiles(u)) for F in marginals]
    r = np.array([rho(h, F) for F in marginals])
    a, value = minimize_linear_l2(r, c, lo, hi)
    return SolveReport(
        a,
        value,
        {},
        {"marginal_values": r.tolist(), "kkt_residual": kkt_residual(r, c, a, lo, hi), "seconds": time.perf_counter() - t},
    )


@dataclass(frozen=True)
class SearchParams:
    starts: int = 20
    seed: int = 0
    search_N: int = 2000  # RA grid size during the search; the final value uses RAParams.N
    maxfev: int | None = None  # per start; default 10 n + 50
    polish: int = 3  # best starts re-evaluated at full resolution


def solve_marginal_nonconvex_lb(
    h: DistortionFunction | None,
    marginals: Sequence[QuantileModel],
    lo: float = 0.0,
    hi: float = 1.0,
    c: float = 0.0,
    ra_params: RAParams = RAParams(),
    search: SearchParams = SearchParams(),
    convex_start: np.ndarray | None = None,
) -> SolveReport:
    """min over A_{a,b} of (RA lower bound of the worst-case riskmetric of a'X) + c ||a||_2.

    ``h`` is ignored in tail (VaR) mode.  Seeded multi-start Nelder-Mead on
    unconstrained coordinates mapped through the simplex-box projection; start 0
    is ``convex_start`` (typically the convex solution) when given.
    """
    n = len(marginals)
    check_box(n, lo, hi)
    t_start = time.perf_counter()
    rng = np.random.default_rng(search.seed)
    coarse = RAParams(**{**ra_params.__dict__, "N": min(search.search_N, ra_params.N)})

    def value(a, params):
        return ra_lower_bound(h, marginals, a, params) + c * float(np.linalg.norm(a))

    starts = []
    if convex_start is not None:
        starts.append(project_simplex_box(convex_start, lo, hi))
    while len(starts) < search.starts:
        starts.append(project_simplex_box(rng.dirichlet(np.ones(n)), lo, hi))
    maxfev = search.maxfev or 10 * n + 50

    log = []
    for k, a0 in enumerate(starts):
        f = lambda z: value(project_simplex_box(z, lo, hi), coarse)
        res = optimize.minimize(
            f, a0, method="Nelder-Mead", options={"maxfev": maxfev, "xatol": 1e-6, "fatol": 1e-9, "adaptive": n > 5}
        )
        a = project_simplex_box(res.x, lo, hi)
        log.append({"start": k, "coarse_value": float(res.fun), "weights": a, "nfev": int(res.nfev)})

    ranked = sorted(log, key=lambda e: (e["coarse_value"], e["start"]))
    candidates = [e["weights"] for e in ranked[: max(1, search.polish)]]
    if convex_start is not None:
        candidates.append(starts[0])
    best = None
    for a in candidates:
        v = value(a, ra_params)
        if best is None or v < best[0] - 1e-15:
            best = (v, a)
    diag = {
        "starts": [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in e.items()} for e in log],
        "seed": search.seed,
        "seconds": time.perf_counter() - t_start,
    }
    return SolveReport(best[1], best[0], {}, diag)


__all__ = [
    "PortfolioProblem",
    "SolveReport",
    "SearchParams",
    "check_psd",
    "project_simplex_box",
    "reduce_mean_cov",
    "min_variance",
    "diff_tk",
    "solve_diff_tk",
    "tk_envelope_norm",
    "gamma_penalty",
    "solve_pref_robust",
    "minimize_linear_l2",
    "kkt_residual",
    "solve_marginal_convex",
    "solve_marginal_nonconvex_lb",
]
