"""Worst and best cases of distortion riskmetrics over mean / central-moment sets.

For M^p(m, v) = {E[Y] = m, ||Y - m||_p <= v} the supremum of rho_h is
m h(1) + v [h*]_q with q the conjugate exponent, where [g]_q is the q-distance
of g' from its best constant.  The maximiser, when it exists, has quantile
m + v phi(t) with phi built from the envelope derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .distortion import DistortionFunction, DomainError, combine, is_usc
from .envelope import concave_envelope, convex_envelope
from .quantile import PiecewiseQuantile, quad_split, QuantileModel, Segment, SmoothQuantile


@dataclass(frozen=True)
class MomentConstraint:
    """M^p(m, v); v = 0 is admitted as the degenerate law at m."""

    p: float
    m: float
    v: float

    def __post_init__(self):
        if not self.p > 1.0 or math.isinf(self.p):
            raise DomainError(f"p={self.p} must lie in (1, inf)")
        if not self.v >= 0.0:
            raise DomainError(f"v={self.v} must be non-negative")

    @cached_property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def contains(self, F: QuantileModel, tol: float = 1e-10) -> bool:
        return F.in_moment_set(self.p, self.m, self.v, tol)


@dataclass(frozen=True)
class CenterNorm:
    center: float  # nan when the norm is infinite
    norm: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.norm)


# ---------------------------------------------------------------------------
# q-centre and q-norm
# ---------------------------------------------------------------------------


def _diverges(h: DistortionFunction, q: float) -> bool:
    """Whether |h'|^q fails to be integrable near 0 or 1 (TK-type singularities)."""
    for i in (0, len(h.pieces) - 1):
        g = h.pieces[i].min_gamma()
        if g is not None and q * (1.0 - g) >= 1.0:
            return True
    return False


def _piece_power_integral(piece, a: float, b: float, x: float, q: float, power: float, signed: bool) -> float:
    """Integral over (a, b) of |h' - x|^power (times sign when ``signed``)."""
    if piece.is_linear:
        d = float(piece.derivative(0.5 * (a + b))) - x
        val = abs(d) ** power * (b - a)
        return math.copysign(val, d) if signed else val

    def f(t, c):
        d = piece.derivative(t, c) - x
        val = np.abs(d) ** power
        return np.sign(d) * val if signed else val

    return quad_split(f, a, b, _crossings(piece, a, b, x), pair=True)


def _crossings(piece, a: float, b: float, x: float) -> list[float]:
    """Points where the derivative of a smooth piece crosses x (kinks of |h' - x|^q)."""
    grid = a + (b - a) * 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, 65)))
    grid = grid[1:-1]
    d = np.asarray(piece.derivative(grid), dtype=float) - x
    out = []
    g = lambda t: float(piece.derivative(t)) - x
    for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        out.append(optimize.brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
    return out


def _deviation(h: DistortionFunction, x: float, q: float, power: float, signed: bool = False) -> float:
    return sum(
        _piece_power_integral(p, h.knots[i], h.knots[i + 1], x, q, power, signed) for i, p in enumerate(h.pieces)
    )


def _derivative_range(h: DistortionFunction) -> tuple[float, float]:
    vals = []
    for i, piece in enumerate(h.pieces):
        a, b = h.knots[i], h.knots[i + 1]
        if piece.is_linear:
            vals.append(float(piece.derivative(a)))
        else:
            g = a + (b - a) * np.linspace(1e-6, 1 - 1e-6, 257)
            vals.extend(np.asarray(piece.derivative(g), dtype=float).tolist())
    return min(vals), max(vals)


def q_center(h: DistortionFunction, q: float) -> CenterNorm:
    """Best constant approximation c of h' in L^q and the distance [h]_q."""
    q = float(q)
    if not 1.0 < q < math.inf:
        raise DomainError(f"q={q} must lie in (1, inf)")
    if not h.is_continuous or _diverges(h, q):
        return CenterNorm(math.nan, math.inf)
    lo, hi = _derivative_range(h)
    if hi - lo <= 1e-15 * max(1.0, abs(hi)):
        return CenterNorm(lo, 0.0)
    # first-order condition: x -> int sign(h'-x)|h'-x|^(q-1) is strictly decreasing
    g = lambda x: _deviation(h, x, q, q - 1.0, signed=True)
    center = optimize.brentq(g, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=400)
    norm = _deviation(h, center, q, q) ** (1.0 / q)
    return CenterNorm(center, norm)


def q_norm(h: DistortionFunction, q: float) -> float:
    return q_center(h, q).norm


def q_norm_es(alpha: float, p: float) -> float:
    """Closed form of [h*]_q for the VaR / ES envelope min(t / (1 - alpha), 1)."""
    alpha, p = float(alpha), float(p)
    if not 0.0 < alpha < 1.0 or not p > 1.0:
        raise DomainError("need alpha in (0, 1) and p > 1")
    return alpha * (alpha**p * (1.0 - alpha) + (1.0 - alpha) ** p * alpha) ** (-1.0 / p)


def q_norm_es_inf(alpha: float, p: float) -> float:
    """Coefficient of v in the best case of VaR / ES at level alpha (non-positive)."""
    alpha, p = float(alpha), float(p)
    return -(1.0 - alpha) * (alpha**p * (1.0 - alpha) + (1.0 - alpha) ** p * alpha) ** (-1.0 / p)


# ---------------------------------------------------------------------------
# extremal quantiles
# ---------------------------------------------------------------------------


class _PhiBranch(SmoothQuantile):
    """u -> m + sign * v * phi(1 - u) on a smooth envelope piece."""

    def __init__(self, piece, a: float, b: float, center: float, norm: float, q: float, m: float, v: float, sign: float):
        self.piece, self.c, self.n, self.q = piece, center, norm, q
        self.m, self.v, self.sign = m, v, sign
        self.breaks = tuple(1.0 - t for t in _crossings(piece, a, b, center))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return self.ppf_pair(u, 1.0 - u)

    def isf(self, s):
        s = np.asarray(s, dtype=float)
        return self.ppf_pair(1.0 - s, s)

    def ppf_pair(self, u, c):
        # level u corresponds to t = 1 - u = c, with complement u
        d = np.asarray(self.piece.derivative(c, u), dtype=float) - self.c
        phi = np.sign(d) * np.abs(d) ** (self.q - 1.0) * self.n ** (1.0 - self.q)
        return self.m + self.sign * self.v * phi


def _phi_model(env: DistortionFunction, cn: CenterNorm, q: float, m: float, v: float, sign: float) -> QuantileModel:
    segs = []
    for i, piece in enumerate(env.pieces):
        a, b = env.knots[i], env.knots[i + 1]
        u0, u1 = 1.0 - b, 1.0 - a
        if piece.is_linear:
            d = float(piece.derivative(0.5 * (a + b))) - cn.center
            phi = math.copysign(abs(d) ** (q - 1.0), d) * cn.norm ** (1.0 - q)
            segs.append(Segment(u0, u1, m + sign * v * phi))
        else:
            segs.append(Segment(u0, u1, None, _PhiBranch(piece, a, b, cn.center, cn.norm, q, m, v, sign)))
    segs.sort(key=lambda s: s.u0)
    return PiecewiseQuantile(segs)


@dataclass(frozen=True)
class BoundResult:
    value: float
    extremal: QuantileModel | None
    attained: bool
    norm: float
    center: float = math.nan
    envelope: DistortionFunction | None = field(default=None, repr=False)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.value)

    def __iter__(self):
        yield self.value
        yield self.extremal


class ZeroNormError(ValueError):
    """Every law in the moment set attains the bound; no unique maximiser."""


def _attainable(
    h: DistortionFunction, q: float, direction: str, upper: CenterNorm | None = None, lower: CenterNorm | None = None
) -> bool:
    # the infimum is the supremum for -h, so it needs -h upper semicontinuous
    if not is_usc(h if direction == "sup" else combine(h, op="negate")):
        return False
    upper = upper or q_center(concave_envelope(h).envelope, q)
    lower = lower or q_center(convex_envelope(h).envelope, q)
    return 0.0 < upper.norm < math.inf and 0.0 < lower.norm < math.inf


def worst_case(h: DistortionFunction, mc: MomentConstraint) -> BoundResult:
    """sup of rho_h over M^p(m, v): m h(1) + v [h*]_q."""
    env = concave_envelope(h).envelope
    cn = q_center(env, mc.q)
    base = mc.m * h.value_at_one
    if mc.v == 0.0 or cn.norm == 0.0:
        return BoundResult(base, None, False, cn.norm, cn.center, env)
    if math.isinf(cn.norm):
        return BoundResult(math.inf, None, False, cn.norm, cn.center, env)
    value = base + mc.v * cn.norm
    attained = _attainable(h, mc.q, "sup", upper=cn)
    extremal = _phi_model(env, cn, mc.q, mc.m, mc.v, 1.0) if attained else None
    return BoundResult(value, extremal, attained, cn.norm, cn.center, env)


def best_case(h: DistortionFunction, mc: MomentConstraint) -> BoundResult:
    """inf of rho_h over M^p(m, v): m h(1) - v [h_*]_q."""
    env = convex_envelope(h).envelope
    cn = q_center(env, mc.q)
    base = mc.m * h.value_at_one
    if mc.v == 0.0 or cn.norm == 0.0:
        return BoundResult(base, None, False, cn.norm, cn.center, env)
    if math.isinf(cn.norm):
        return BoundResult(-math.inf, None, False, cn.norm, cn.center, env)
    value = base - mc.v * cn.norm
    attained = _attainable(h, mc.q, "inf", lower=cn)
    extremal = _phi_model(env, cn, mc.q, mc.m, mc.v, -1.0) if attained else None
    return BoundResult(value, extremal, attained, cn.norm, cn.center, env)


def extremal_quantile(h: DistortionFunction, mc: MomentConstraint, direction: str = "sup") -> QuantileModel:
    """Quantile of the optimiser: m + v phi_{h*} (sup) or m - v phi_{h_*} (inf)."""
    if direction not in ("sup", "inf"):
        raise ValueError(f"unknown direction {direction!r}")
    env = (concave_envelope if direction == "sup" else convex_envelope)(h).envelope
    cn = q_center(env, mc.q)
    if cn.norm == 0.0:
        raise ZeroNormError("zero norm: every law in the moment set is optimal")
    if math.isinf(cn.norm):
        raise DomainError("infinite norm: the bound is not attained")
    return _phi_model(env, cn, mc.q, mc.m, mc.v, 1.0 if direction == "sup" else -1.0)


def bound_report(h: DistortionFunction, mc: MomentConstraint) -> dict:
    sup, inf = worst_case(h, mc), best_case(h, mc)

    def knots(res: BoundResult):
        if res.extremal is None:
            return []
        return res.extremal.to_dict()["knots"]

    return {
        "h": h.to_dict(),
        "p": mc.p,
        "m": mc.m,
        "v": mc.v,
        "value_sup": sup.value,
        "value_inf": inf.value,
        "attained_sup": sup.attained,
        "attained_inf": inf.attained,
        "extremal_quantile_sup": knots(sup),
        "extremal_quantile_inf": knots(inf),
    }


__all__ = [
    "MomentConstraint",
    "CenterNorm",
    "BoundResult",
    "ZeroNormError",
    "q_center",
    "q_norm",
    "q_norm_es",
    "q_norm_es_inf",
    "worst_case",
    "best_case",
    "extremal_quantile",
    "bound_report",
]
