"""Distributions represented by their quantile functions.

Every model exposes its left-continuous quantile on (0, 1] as an ordered list
of :class:`Segment` objects, each either constant (an atom) or a smooth
strictly increasing function.  Means, partial integrals, concentration and the
distortion functional are all computed from these segments, so no model is
ever discretised behind the caller's back.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .distortion import DistortionFunction, DomainError

#: Probability levels within this distance of a segment boundary snap to it.
LEVEL_TOL = 1e-12


class NonIntegrableError(ArithmeticError):
    """A quantile function is not integrable where an integral was required."""


class DivergenceError(ArithmeticError):
    """The distortion functional diverges; ``sign`` is +1 or -1."""

    def __init__(self, sign: float, msg: str = ""):
        super().__init__(msg or f"integral diverges to {'+' if sign > 0 else '-'}inf")
        self.sign = sign


class ContractError(ValueError):
    """An input violates an operation's stated precondition."""


# ---------------------------------------------------------------------------
# interval sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalSet:
    """Ordered, pairwise disjoint open subintervals of [0, 1]."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        for a, b in ivs:
            if not 0.0 <= a < b <= 1.0:
                raise DomainError(f"bad interval ({a}, {b})")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 < b0 - LEVEL_TOL:
                raise DomainError("intervals overlap")
        object.__setattr__(self, "intervals", ivs)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def reflected(self) -> "IntervalSet":
        return IntervalSet(tuple((1.0 - b, 1.0 - a) for a, b in self.intervals))

    def to_list(self) -> list[list[float]]:
        return [[a, b] for a, b in self.intervals]


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Quantile on the probability range (u0, u1]: an atom or a smooth branch."""

    u0: float
    u1: float
    value: float | None = None
    source: "SmoothQuantile | None" = None

    @property
    def is_atom(self) -> bool:
        return self.source is None

    def ppf(self, u):
        if self.source is None:
            return np.full_like(np.asarray(u, dtype=float), self.value)
        return self.source.ppf(u)

    def ppf_pair(self, u, c):
        if self.source is None:
            return np.full_like(np.asarray(u, dtype=float), self.value)
        return self.source.ppf_pair(u, c)

    def integral(self, a: float, b: float) -> float:
        a, b = max(a, self.u0), min(b, self.u1)
        if b <= a:
            return 0.0
        if self.source is None:
            return self.value * (b - a)
        return self.source.partial_integral(a, b)

    def level_of(self, x: float) -> float | None:
        """Probability level inside the segment where the quantile crosses ``x``."""
        if self.source is None:
            return None
        lo, hi = float(self.ppf(self.u0)), float(self.ppf(self.u1))
        if not lo < x < hi:
            return None
        return self.source.level_of(x, self.u0, self.u1)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_RATIO = 0.125


def _offsets(width: float, deep: bool) -> np.ndarray:
    """Cell boundaries as offsets from an end point, shrinking geometrically."""
    floor = 1e-250 if deep else 1e-16 * max(width, 1.0)
    out = [0.5 * width]
    while out[-1] * _RATIO > floor:
        out.append(out[-1] * _RATIO)
    out.append(0.0)
    return np.asarray(out)


def _half_nodes(width: float, deep: bool) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes (as offsets from the end) and weights for one half interval."""
    edges = _offsets(width, deep)[::-1]
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    d = (lo + half * (1.0 + _GL_NODES[None, :])).ravel()
    w = (half * _GL_WEIGHTS[None, :]).ravel()
    return d, w


def quad_split(f, a: float, b: float, points=(), pair: bool = False) -> float:
    """Graded Gauss-Legendre quadrature of a vectorised integrand over (a, b).

    Quantiles and TK derivatives have integrable power singularities at 0 and
    1, and integrands like |Q - m|^p have algebraic kinks at interior
    ``points``.  The range is split at the points and every piece is graded
    geometrically towards both of its ends so a fixed 24-point rule stays
    accurate; nodes are built as offsets from the nearer end.  With
    ``pair=True`` the integrand is called as ``f(x, c)`` with ``c = 1 - x``
    computed without cancellation, which resolves singularities at 1 far below
    machine epsilon.
    """
    if b <= a:
        return 0.0
    ends = [a] + sorted(x for x in points if a < x < b) + [b]
    xs, cs, ws = [], [], []
    for lo, hi in zip(ends, ends[1:]):
        width = hi - lo
        d_lo, w_lo = _half_nodes(width, lo == 0.0)
        d_hi, w_hi = _half_nodes(width, pair and hi == 1.0)
        xs += [lo + d_lo, hi - d_hi]
        cs += [1.0 - (lo + d_lo), (1.0 - hi) + d_hi]
        ws += [w_lo, w_hi]
    x, w = np.concatenate(xs), np.concatenate(ws)
    vals = f(x, np.concatenate(cs)) if pair else f(x)
    return float(np.dot(w, np.asarray(vals, dtype=float)))


class SmoothQuantile:
    """A continuous non-decreasing quantile branch.

    ``breaks`` lists levels where the branch is not smooth; integrals split there.
    """

    breaks: tuple = ()

    def ppf(self, u):
        raise NotImplementedError

    def isf(self, s):
        """Quantile at level 1 - s; overridden where the upper tail has a closed form."""
        return self.ppf(1.0 - np.asarray(s, dtype=float))

    def ppf_pair(self, u, c):
        """Quantile at u given also c = 1 - u exactly (accurate in both tails)."""
        u = np.asarray(u, dtype=float)
        c = np.asarray(c, dtype=float)
        with np.errstate(all="ignore"):
            return np.where(u <= 0.5, self.ppf(u), self.isf(c))

    def partial_integral(self, a: float, b: float) -> float:
        return quad_split(self.ppf_pair, a, b, self.breaks, pair=True)

    def level_of(self, x: float, lo: float, hi: float) -> float:
        return optimize.brentq(lambda u: float(self.ppf(u)) - x, lo, hi, xtol=1e-14, maxiter=300)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


class QuantileModel:
    """Base class: subclasses implement :meth:`_segments` and serialisation."""

    def _segments(self) -> list[Segment]:
        raise NotImplementedError

    @cached_property
    def segments(self) -> tuple[Segment, ...]:
        return tuple(self._segments())

    @cached_property
    def _bounds(self) -> np.ndarray:
        return np.array([s.u0 for s in self.segments] + [self.segments[-1].u1])

    def _snap(self, t: float) -> float:
        b = self._bounds
        i = int(np.argmin(np.abs(b - t)))
        return float(b[i]) if abs(b[i] - t) <= LEVEL_TOL else t

    def quantile(self, t: float, side: str = "left") -> float:
        t = float(t)
        if not 0.0 <= t <= 1.0 or math.isnan(t):
            raise DomainError(f"level {t} outside [0, 1]")
        t = self._snap(t)
        if side == "left":
            if t == 0.0:
                return -math.inf
            for s in self.segments:
                if s.u0 < t <= s.u1:
                    return float(s.ppf(t))
        elif side == "right":
            if t == 1.0:
                return math.inf
            for s in self.segments:
                if s.u0 <= t < s.u1:
                    return float(s.ppf(t))
        else:
            raise ValueError(f"unknown side {side!r}")
        raise AssertionError("segments do not cover (0, 1)")

    def quantiles(self, ts) -> np.ndarray:
        """Vectorised left quantile for levels in (0, 1)."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty_like(ts)
        bounds = self._bounds
        idx = np.clip(np.searchsorted(bounds, ts, side="left") - 1, 0, len(self.segments) - 1)
        for i, s in enumerate(self.segments):
            m = idx == i
            if m.any():
                out[m] = s.ppf(ts[m])
        return out

    # -- integrals ----------------------------------------------------------

    def integral(self, a: float = 0.0, b: float = 1.0) -> float:
        """Integral of the quantile function over [a, b]."""
        total = 0.0
        for s in self.segments:
            if s.u1 <= a or s.u0 >= b:
                continue
            total += s.integral(a, b)
        if not math.isfinite(total):
            raise NonIntegrableError(f"quantile not integrable on ({a}, {b})")
        return total

    @cached_property
    def mean(self) -> float:
        return self.integral(0.0, 1.0)

    def central_moment(self, p: float) -> float:
        """E|X - E X|^p computed from the quantile function."""
        m = self.mean
        total = 0.0
        for s in self.segments:
            if s.is_atom:
                total += abs(s.value - m) ** p * (s.u1 - s.u0)
                continue
            pts = []
            u_star = s.level_of(m)
            if u_star is not None:
                pts.append(u_star)
            pts += list(s.source.breaks)
            total += quad_split(lambda u, c, s=s: np.abs(s.ppf_pair(u, c) - m) ** p, s.u0, s.u1, pts, pair=True)
        return total

    def central_norm(self, p: float) -> float:
        return self.central_moment(p) ** (1.0 / p)

    def stop_loss(self, k: float) -> float:
        """E[(X - k)_+]."""
        total = 0.0
        for s in self.segments:
            if s.is_atom:
                total += max(s.value - k, 0.0) * (s.u1 - s.u0)
                continue
            lo, hi = float(s.ppf(s.u0)), float(s.ppf(s.u1))
            if hi <= k:
                continue
            start = s.u0 if lo >= k else s.level_of(k)
            total += s.integral(start, s.u1) - k * (s.u1 - start)
        return total

    def in_moment_set(self, p: float, m: float, v: float, tol: float = 1e-10) -> bool:
        return abs(self.mean - m) <= tol and self.central_norm(p) <= v + tol

    # -- conversions ----------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return all(s.is_atom for s in self.segments)

    def to_discrete(self) -> "Discrete":
        if not self.is_discrete:
            raise ContractError("model has a continuous part")
        return Discrete([s.value for s in self.segments], [s.u1 - s.u0 for s in self.segments])

    def to_dict(self) -> dict:
        raise NotImplementedError


class _Parametric(QuantileModel, SmoothQuantile):
    def _segments(self):
        return [Segment(0.0, 1.0, source=self)]


@dataclass(frozen=True, eq=True)
class Uniform(_Parametric):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError("need b > a")

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)

    def isf(self, s):
        return self.b - (self.b - self.a) * np.asarray(s, dtype=float)

    def partial_integral(self, lo, hi):
        return self.a * (hi - lo) + 0.5 * (self.b - self.a) * (hi * hi - lo * lo)

    def level_of(self, x, lo, hi):
        return (x - self.a) / (self.b - self.a)

    def to_dict(self):
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=True)
class Normal(_Parametric):
    """Normal law with the given mean and standard deviation."""

    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("need sigma > 0")

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float))

    def isf(self, s):
        return self.mu - self.sigma * special.ndtri(np.asarray(s, dtype=float))

    def partial_integral(self, lo, hi):
        # d/du [-phi(ndtri(u))] = ndtri(u)
        def g(u):
            if u <= 0.0 or u >= 1.0:
                return 0.0
            return stats.norm.pdf(special.ndtri(u))

        return self.mu * (hi - lo) + self.sigma * (g(lo) - g(hi))

    def level_of(self, x, lo, hi):
        return float(special.ndtr((x - self.mu) / self.sigma))

    def to_dict(self):
        return {"kind": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, eq=True)
class Exponential(_Parametric):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("need rate > 0")

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def isf(self, s):
        with np.errstate(divide="ignore"):
            return -np.log(np.asarray(s, dtype=float)) / self.rate

    def partial_integral(self, lo, hi):
        def g(u):
            r = 1.0 - u
            return u + (r * math.log(r) if r > 0 else 0.0)

        return (g(hi) - g(lo)) / self.rate

    def level_of(self, x, lo, hi):
        return -math.expm1(-self.rate * x)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True, eq=True)
class Pareto(_Parametric):
    """Pareto law ``P(X > x) = (scale / (x - loc))^shape`` for ``x >= loc + scale``.

    ``loc = -scale`` gives the Lomax (Pareto II) law supported on [0, inf).
    """

    shape: float
    scale: float = 1.0
    loc: float = 0.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("need shape > 0 and scale > 0")

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return self.loc + self.scale * (1.0 - u) ** (-1.0 / self.shape)

    def isf(self, s):
        with np.errstate(divide="ignore"):
            return self.loc + self.scale * np.asarray(s, dtype=float) ** (-1.0 / self.shape)

    def partial_integral(self, lo, hi):
        e = 1.0 - 1.0 / self.shape
        if hi >= 1.0 and e <= 0.0:
            return math.inf
        if e == 0.0:
            return self.loc * (hi - lo) + self.scale * (math.log1p(-lo) - math.log1p(-hi))
        return self.loc * (hi - lo) + self.scale / e * ((1.0 - lo) ** e - (1.0 - hi) ** e)

    def level_of(self, x, lo, hi):
        return 1.0 - (self.scale / (x - self.loc)) ** self.shape

    def to_dict(self):
        return {"kind": "pareto", "shape": self.shape, "scale": self.scale, "loc": self.loc}


class Discrete(QuantileModel):
    """Finitely many atoms; equal atoms are merged and sorted."""

    def __init__(self, atoms: Iterable[float], probs: Iterable[float] | None = None):
        atoms = np.asarray(list(atoms), dtype=float)
        if atoms.size == 0:
            raise DomainError("need at least one atom")
        probs = np.full(atoms.size, 1.0 / atoms.size) if probs is None else np.asarray(list(probs), dtype=float)
        if probs.shape != atoms.shape or np.any(probs < 0):
            raise DomainError("probabilities must be non-negative and match atoms")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        keep = probs > 0
        atoms, probs = atoms[keep], probs[keep]
        order = np.argsort(atoms, kind="stable")
        atoms, probs = atoms[order], probs[order]
        ux, inv = np.unique(atoms, return_inverse=True)
        up = np.zeros(ux.size)
        np.add.at(up, inv, probs)
        self.atoms = ux
        self.probs = up / up.sum()

    def _segments(self):
        cum = np.concatenate([[0.0], np.cumsum(self.probs)])
        cum[-1] = 1.0
        return [Segment(float(cum[i]), float(cum[i + 1]), value=float(x)) for i, x in enumerate(self.atoms)]

    @cached_property
    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))

    def central_moment(self, p: float) -> float:
        return float(np.dot(np.abs(self.atoms - self.mean) ** p, self.probs))

    def stop_loss(self, k: float) -> float:
        return float(np.dot(np.maximum(self.atoms - k, 0.0), self.probs))

    def survival_levels(self) -> np.ndarray:
        """P(X >= x_j) for each atom, computed by reverse summation."""
        s = np.cumsum(self.probs[::-1])[::-1].copy()
        s[0] = 1.0
        return s

    def __eq__(self, other):
        return (
            isinstance(other, Discrete)
            and self.atoms.shape == other.atoms.shape
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.probs.tobytes()))

    def __repr__(self):
        return f"Discrete(atoms={self.atoms.tolist()}, probs={self.probs.tolist()})"

    def to_dict(self):
        return {"kind": "discrete", "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


class Empirical(Discrete):
    """Empirical law of a sample (each observation carries mass 1/n)."""

    def __init__(self, sample: Iterable[float]):
        sample = np.sort(np.asarray(list(sample), dtype=float))
        super().__init__(sample)
        self.sample = sample

    @classmethod
    def from_csv(cls, path) -> "Empirical":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and r[0].strip()]
        values = []
        for r in rows:
            try:
                values.append(float(r[0]))
            except ValueError:
                if values:
                    raise
        return cls(values)

    def to_dict(self):
        return {"kind": "empirical", "sample": self.sample.tolist()}


class Concentrated(QuantileModel):
    """The base law with its quantile replaced by the interval mean on each interval."""

    def __init__(self, base: QuantileModel, intervals: IntervalSet):
        self.base = base
        self.intervals = intervals if isinstance(intervals, IntervalSet) else IntervalSet(tuple(intervals))

    def _segments(self):
        out: list[Segment] = []
        cuts = list(self.intervals)
        means = []
        for a, b in cuts:
            total = self.base.integral(a, b)
            means.append(total / (b - a))

        def free_parts(s: Segment):
            lo = s.u0
            parts = []
            for a, b in cuts:
                if b <= lo or a >= s.u1:
                    continue
                if a > lo:
                    parts.append((lo, a))
                lo = max(lo, b)
            if lo < s.u1:
                parts.append((lo, s.u1))
            return parts

        pieces = []
        for s in self.base.segments:
            for lo, hi in free_parts(s):
                if hi - lo > 0:
                    pieces.append(Segment(lo, hi, s.value, s.source))
        for (a, b), m in zip(cuts, means):
            pieces.append(Segment(a, b, value=m))
        pieces.sort(key=lambda s: s.u0)
        # merge neighbouring atoms with identical values
        for s in pieces:
            if out and out[-1].is_atom and s.is_atom and out[-1].value == s.value:
                out[-1] = Segment(out[-1].u0, s.u1, value=s.value)
            else:
                out.append(s)
        return out

    def to_dict(self):
        return {"kind": "concentrated", "base": self.base.to_dict(), "intervals": self.intervals.to_list()}


class _Shifted(SmoothQuantile):
    """``offset + scale * f(u)`` for a vectorised callable ``f``."""

    def __init__(self, f: Callable, offset: float = 0.0, scale: float = 1.0):
        self.f, self.offset, self.scale = f, offset, scale

    def ppf(self, u):
        return self.offset + self.scale * np.asarray(self.f(np.asarray(u, dtype=float)), dtype=float)


class PiecewiseQuantile(QuantileModel):
    """Quantile assembled from explicit segments (used for optimisers)."""

    def __init__(self, segments: Sequence[Segment]):
        self._segs = list(segments)

    def _segments(self):
        return self._segs

    def to_dict(self):
        knots = []
        for s in self.segments:
            grid = [s.u0, s.u1] if s.is_atom else list(np.linspace(s.u0, s.u1, 9))
            for u in grid:
                val = s.value if s.is_atom else float(s.ppf(u))
                knots.append([u, val])
        return {"kind": "piecewise", "knots": knots}


def from_dict(d: dict) -> QuantileModel:
    kind = d["kind"]
    if kind == "uniform":
        return Uniform(d.get("a", 0.0), d.get("b", 1.0))
    if kind == "normal":
        return Normal(d.get("mu", 0.0), d.get("sigma", 1.0))
    if kind == "exponential":
        return Exponential(d.get("rate", 1.0))
    if kind == "pareto":
        return Pareto(d["shape"], d.get("scale", 1.0), d.get("loc", 0.0))
    if kind == "discrete":
        return Discrete(d["atoms"], d.get("probs"))
    if kind == "empirical":
        if "csv" in d:
            return Empirical.from_csv(d["csv"])
        return Empirical(d["sample"])
    if kind == "concentrated":
        return Concentrated(from_dict(d["base"]), IntervalSet(tuple(tuple(p) for p in d["intervals"])))
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


def concentrate(F: QuantileModel, C: tuple[float, float]) -> QuantileModel:
    """C-concentration: the quantile on (a, b] becomes its average over (a, b)."""
    a, b = float(C[0]), float(C[1])
    return concentrate_multi(F, IntervalSet(((a, b),)))


def concentrate_multi(F: QuantileModel, I: IntervalSet) -> QuantileModel:
    if not isinstance(I, IntervalSet):
        I = IntervalSet(tuple(I))
    if len(I) == 0:
        return F
    G = Concentrated(F, I)
    G.segments  # surfaces non-integrability eagerly
    if G.is_discrete:
        return G.to_discrete()
    return G


# ---------------------------------------------------------------------------
# distortion functional
# ---------------------------------------------------------------------------


def _checked(total: float) -> float:
    if math.isnan(total):
        raise DivergenceError(1.0, "integral is undefined (inf - inf)")
    if math.isinf(total):
        raise DivergenceError(math.copysign(1.0, total))
    return total


def _rho_discrete(h: DistortionFunction, F: Discrete) -> float:
    levels = F.survival_levels()
    hv = h(levels)
    weights = hv - np.append(hv[1:], 0.0)
    return float(np.dot(F.atoms, weights))


def _smooth_piece_integral(h_piece, F_seg: Segment, lo: float, hi: float, points=()) -> float:
    """Integral over t in (lo, hi) of Q(1 - t) h'(t) for one smooth quantile branch."""
    if h_piece.is_linear:
        slope = h_piece.poly[1] if len(h_piece.poly) > 1 else 0.0
        return 0.0 if slope == 0.0 else slope * F_seg.integral(1.0 - hi, 1.0 - lo)

    def f(t, c):
        # the quantile is taken at u = 1 - t, whose complement is t itself
        q = F_seg.ppf_pair(c, t)
        d = h_piece.derivative(t, c)
        with np.errstate(invalid="ignore"):
            out = q * d
        return np.where((q == 0.0) | (d == 0.0), 0.0, out)

    pts = [1.0 - u for u in F_seg.source.breaks] + list(points)
    return quad_split(f, lo, hi, pts, pair=True)


def rho_segments(h: DistortionFunction, F: QuantileModel) -> float:
    """Distortion functional from quantile segments and exact jump terms.

    Atom segments contribute value times the continuous variation of h over the
    matching t-range; jumps of h at s use the left quantile at 1 - s for
    h(s+) - h(s) and the right quantile for h(s) - h(s-).
    """
    total = 0.0
    knots = h.knots
    for seg in F.segments:
        lo_t, hi_t = 1.0 - seg.u1, 1.0 - seg.u0
        for i, piece in enumerate(h.pieces):
            a, b = max(lo_t, knots[i]), min(hi_t, knots[i + 1])
            if b <= a:
                continue
            if seg.is_atom:
                dv = float(piece(b) - piece(a))
                if dv != 0.0:
                    total += seg.value * dv
            else:
                total += _smooth_piece_integral(piece, seg, a, b)
    for k, s in enumerate(knots):
        left, mid, right = h.limits(k)
        w_left_q = right - mid
        w_right_q = mid - left
        if w_left_q != 0.0:
            q = F.quantile(1.0 - s, "left")
            if math.isinf(q):
                raise DivergenceError(math.copysign(1.0, q * w_left_q))
            total += q * w_left_q
        if w_right_q != 0.0:
            q = F.quantile(1.0 - s, "right")
            if math.isinf(q):
                raise DivergenceError(math.copysign(1.0, q * w_right_q))
            total += q * w_right_q
    return _checked(total)


def rho(h: DistortionFunction, F: QuantileModel) -> float:
    """Distortion riskmetric of the law F under distortion h."""
    if isinstance(F, Discrete):
        return _checked(_rho_discrete(h, F))
    return rho_segments(h, F)


def weighted_sum_comonotone(
    h: DistortionFunction, weights: Sequence[float], marginals: Sequence[QuantileModel]
) -> float:
    """Sum of a_i rho_h(F_i): the worst case of rho_h(a'X) over all couplings when h is concave."""
    weights = [float(w) for w in weights]
    if len(weights) != len(marginals):
        raise ContractError("weights and marginals differ in length")
    if any(w < 0 for w in weights):
        raise ContractError("weights must be non-negative")
    if not h.is_concave():
        raise ContractError("h must be concave; pass its concave envelope")
    return sum(w * rho(h, F) for w, F in zip(weights, marginals) if w != 0.0)
