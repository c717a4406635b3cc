"""Distortion functions on [0, 1] with exact jump bookkeeping.

A :class:`DistortionFunction` is stored symbolically: a strictly increasing
knot vector ``0 = x_0 < ... < x_k = 1``, one analytic expression per open
interval ``(x_i, x_{i+1})`` and the point value at every knot.  One-sided
limits at a knot come from the neighbouring expressions, so discontinuities
are exact rather than sampled.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Knot locations closer than this are treated as the same point.
KNOT_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


# ---------------------------------------------------------------------------
# analytic expressions
# ---------------------------------------------------------------------------


def tk_value(t, gamma: float):
    """Inverse-S weighting ``t^g / (t^g + (1-t)^g)^(1/g)``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = t**gamma
        b = (1.0 - t) ** gamma
        out = a / (a + b) ** (1.0 / gamma)
    return np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, out))


def tk_derivative(t, gamma: float, c=None):
    """Derivative of :func:`tk_value`; infinite at both ends for gamma < 1.

    ``c`` optionally supplies 1 - t exactly, for accuracy next to t = 1.
    """
    t = np.asarray(t, dtype=float)
    c = 1.0 - t if c is None else np.asarray(c, dtype=float)
    if gamma == 1.0:
        return np.ones_like(t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = t**gamma
        b = c**gamma
        s = a + b
        num = gamma * t ** (gamma - 1.0) * s - a * (t ** (gamma - 1.0) - c ** (gamma - 1.0))
        out = num / s ** (1.0 / gamma + 1.0)
    return np.where((t <= 0.0) | (c <= 0.0), np.inf, out)


@dataclass(frozen=True)
class Expr:
    """Linear combination of a polynomial and TK terms.

    ``poly`` holds power-basis coefficients ``c_0 + c_1 t + ...``;
    ``tk`` holds ``(coefficient, gamma)`` pairs.
    """

    poly: tuple[float, ...] = (0.0,)
    tk: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        poly = tuple(float(c) for c in self.poly) or (0.0,)
        while len(poly) > 1 and poly[-1] == 0.0:
            poly = poly[:-1]
        merged: dict[float, float] = {}
        for coef, gamma in self.tk:
            merged[float(gamma)] = merged.get(float(gamma), 0.0) + float(coef)
        tk = tuple((c, g) for g, c in sorted(merged.items()) if c != 0.0)
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "tk", tk)

    @classmethod
    def constant(cls, c: float) -> "Expr":
        return cls((c,))

    @classmethod
    def line(cls, intercept: float, slope: float) -> "Expr":
        return cls((intercept, slope))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.polynomial.polynomial.polyval(t, self.poly) * np.ones_like(t)
        for coef, gamma in self.tk:
            out = out + coef * tk_value(t, gamma)
        return out

    def derivative(self, t, c=None):
        """Derivative; ``c`` optionally gives 1 - t exactly for the TK terms."""
        t = np.asarray(t, dtype=float)
        dpoly = np.polynomial.polynomial.polyder(self.poly) if len(self.poly) > 1 else (0.0,)
        out = np.polynomial.polynomial.polyval(t, dpoly) * np.ones_like(t)
        for coef, gamma in self.tk:
            with np.errstate(invalid="ignore"):
                out = out + coef * tk_derivative(t, gamma, c)
        if self.tk:
            # at 0 and 1 the most singular TK term dominates (inf - inf otherwise)
            coef = min(self.tk, key=lambda ct: ct[1])[0]
            out = np.where(np.isnan(out), math.copysign(math.inf, coef), out)
        return out

    def scaled(self, k: float) -> "Expr":
        return Expr(tuple(k * c for c in self.poly), tuple((k * c, g) for c, g in self.tk))

    def __add__(self, other: "Expr") -> "Expr":
        n = max(len(self.poly), len(other.poly))
        poly = [0.0] * n
        for i, c in enumerate(self.poly):
            poly[i] += c
        for i, c in enumerate(other.poly):
            poly[i] += c
        return Expr(tuple(poly), self.tk + other.tk)

    @property
    def is_linear(self) -> bool:
        return not self.tk and len(self.poly) <= 2

    @property
    def smooth(self) -> bool:
        """True when the derivative is not constant."""
        return not self.is_linear

    def min_gamma(self) -> float | None:
        return min((g for _, g in self.tk if g != 1.0), default=None)

    def to_list(self) -> dict:
        return {"poly": list(self.poly), "tk": [list(p) for p in self.tk]}

    @classmethod
    def from_list(cls, d: dict) -> "Expr":
        return cls(tuple(d.get("poly", [0.0])), tuple(tuple(p) for p in d.get("tk", [])))


# ---------------------------------------------------------------------------
# distortion functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpClassification:
    """Jump types of the upper semicontinuous modification.

    ``j_plus``: right-continuous jumps, ``j_minus``: left-continuous jumps,
    ``j_zero``: the point value sits strictly above both one-sided limits.
    ``removable`` collects points of J_h where the modification is continuous
    (a downward spike of h), so the four sets partition J_h.
    """

    j_plus: frozenset
    j_minus: frozenset
    j_zero: frozenset
    removable: frozenset = frozenset()

    @property
    def all(self) -> frozenset:
        return self.j_plus | self.j_minus | self.j_zero | self.removable


@dataclass(frozen=True)
class DistortionFunction:
    knots: tuple[float, ...]
    pieces: tuple[Expr, ...]
    values: tuple[float, ...]
    descriptor: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        knots = tuple(float(x) for x in self.knots)
        if len(knots) < 2 or knots[0] != 0.0 or knots[-1] != 1.0:
            raise DomainError("knots must start at 0 and end at 1")
        if any(b - a <= 0.0 for a, b in zip(knots, knots[1:])):
            raise DomainError("knots must be strictly increasing")
        if len(self.pieces) != len(knots) - 1 or len(self.values) != len(knots):
            raise DomainError("need one piece per interval and one value per knot")
        if self.values[0] != 0.0:
            raise DomainError("a distortion function must vanish at 0")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    # -- evaluation -------------------------------------------------------

    def _knot_index(self, t: float) -> int | None:
        i = bisect.bisect_left(self.knots, t - KNOT_TOL)
        if i < len(self.knots) and abs(self.knots[i] - t) <= KNOT_TOL:
            return i
        return None

    def _piece_index(self, t: float) -> int:
        return min(max(bisect.bisect_right(self.knots, t) - 1, 0), len(self.pieces) - 1)

    def eval(self, t: float, side: str = "point") -> float:
        """Evaluate h(t), h(t-) or h(t+) with h(0-) = h(0) and h(1+) = h(1)."""
        t = float(t)
        if not 0.0 <= t <= 1.0 or math.isnan(t):
            raise DomainError(f"t={t} outside [0, 1]")
        k = self._knot_index(t)
        if k is None:
            return float(self.pieces[self._piece_index(t)](t))
        if side == "point":
            return self.values[k]
        if side == "left":
            return self.values[0] if k == 0 else float(self.pieces[k - 1](self.knots[k]))
        if side == "right":
            return self.values[-1] if k == len(self.knots) - 1 else float(self.pieces[k](self.knots[k]))
        raise ValueError(f"unknown side {side!r}")

    def __call__(self, t):
        """Vectorised point evaluation."""
        t = np.asarray(t, dtype=float)
        if np.any((t < 0.0) | (t > 1.0)) or np.any(np.isnan(t)):
            raise DomainError("argument outside [0, 1]")
        flat = t.ravel()
        out = np.empty_like(flat)
        idx = np.clip(np.searchsorted(self.knots, flat, side="right") - 1, 0, len(self.pieces) - 1)
        for i, piece in enumerate(self.pieces):
            m = idx == i
            if m.any():
                out[m] = piece(flat[m])
        knots = np.asarray(self.knots)
        near = np.searchsorted(knots, flat)
        for off in (0, -1):
            j = np.clip(near + off, 0, len(knots) - 1)
            hit = np.abs(knots[j] - flat) <= KNOT_TOL
            out[hit] = np.asarray(self.values)[j[hit]]
        return out.reshape(t.shape)

    def derivative(self, t):
        """Derivative of the absolutely continuous part (inside pieces)."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        idx = np.clip(np.searchsorted(self.knots, flat, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty_like(flat)
        for i, piece in enumerate(self.pieces):
            m = idx == i
            if m.any():
                out[m] = piece.derivative(flat[m])
        return out.reshape(t.shape)

    def limits(self, k: int) -> tuple[float, float, float]:
        """(left, point, right) values at knot number ``k``."""
        x = self.knots[k]
        left = self.values[0] if k == 0 else float(self.pieces[k - 1](x))
        right = self.values[-1] if k == len(self.knots) - 1 else float(self.pieces[k](x))
        return left, self.values[k], right

    @property
    def value_at_one(self) -> float:
        return self.values[-1]

    # -- structure --------------------------------------------------------

    def jumps(self, tol: float = 1e-12) -> list[tuple[float, float, float, float]]:
        """All knots (including 0 and 1) where a one-sided limit differs from the value."""
        out = []
        for k, x in enumerate(self.knots):
            left, mid, right = self.limits(k)
            if abs(left - mid) > tol or abs(right - mid) > tol:
                out.append((x, left, mid, right))
        return out

    @property
    def is_continuous(self) -> bool:
        return not self.jumps()

    def total_variation(self) -> float:
        tv = 0.0
        for k in range(len(self.knots)):
            left, mid, right = self.limits(k)
            tv += abs(mid - left) + abs(right - mid)
        for i, piece in enumerate(self.pieces):
            a, b = self.knots[i], self.knots[i + 1]
            if piece.is_linear:
                tv += abs(float(piece(b) - piece(a)))
            else:
                grid = np.linspace(a, b, 2049)
                tv += float(np.abs(np.diff(piece(grid))).sum())
        return tv

    def is_concave(self, tol: float = 1e-9, grid: int = 2049) -> bool:
        xs, ys = self.graph_points(grid)
        return _is_concave_points(xs, ys, tol)

    def graph_points(self, per_piece: int = 257) -> tuple[np.ndarray, np.ndarray]:
        """Samples of the closed graph: every piece plus all one-sided limits."""
        xs: list[np.ndarray] = []
        ys: list[np.ndarray] = []
        for i, piece in enumerate(self.pieces):
            a, b = self.knots[i], self.knots[i + 1]
            g = a + (b - a) * 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, per_piece)))
            xs.append(g)
            ys.append(piece(g))
        for k, x in enumerate(self.knots):
            left, mid, right = self.limits(k)
            xs.append(np.array([x, x, x]))
            ys.append(np.array([left, mid, right]))
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = np.lexsort((y, x))
        return x[order], y[order]

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        if self.descriptor is not None:
            return self.descriptor
        return piecewise_descriptor(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _is_concave_points(xs, ys, tol):
    # a concave graph lies on or below every chord; checked on consecutive triples
    # after collapsing repeated abscissae to their maximum
    ux, inv = np.unique(xs, return_inverse=True)
    uy = np.full(ux.shape, -np.inf)
    np.maximum.at(uy, inv, ys)
    lo = np.full(ux.shape, np.inf)
    np.minimum.at(lo, inv, ys)
    interior = (ux > 0.0) & (ux < 1.0)
    if np.any(interior & (uy - lo > tol)):
        return False
    x0, x1, x2 = ux[:-2], ux[1:-1], ux[2:]
    chord = uy[:-2] + (uy[2:] - uy[:-2]) * (x1 - x0) / (x2 - x0)
    return bool(np.all(uy[1:-1] >= chord - tol))


def piecewise_descriptor(h: DistortionFunction) -> dict:
    return {
        "kind": "piecewise",
        "knots": list(h.knots),
        "values": list(h.values),
        "pieces": [p.to_list() for p in h.pieces],
    }


# ---------------------------------------------------------------------------
# jump analysis
# ---------------------------------------------------------------------------


def jump_set(h: DistortionFunction, tol: float = 1e-12) -> tuple[frozenset, JumpClassification]:
    """Interior discontinuities J_h and their classification on the usc modification."""
    jh = []
    plus, minus, zero, removable = [], [], [], []
    for k in range(1, len(h.knots) - 1):
        left, mid, right = h.limits(k)
        if abs(left - mid) <= tol and abs(right - mid) <= tol:
            continue
        x = h.knots[k]
        jh.append(x)
        top = max(left, mid, right)
        eq_left = abs(left - top) <= tol
        eq_right = abs(right - top) <= tol
        if eq_left and eq_right:
            removable.append(x)
        elif eq_right:
            plus.append(x)
        elif eq_left:
            minus.append(x)
        else:
            zero.append(x)
    cls = JumpClassification(frozenset(plus), frozenset(minus), frozenset(zero), frozenset(removable))
    return frozenset(jh), cls


def usc_modification(h: DistortionFunction) -> DistortionFunction:
    """Raise each interior jump value to the max of its point value and limits."""
    values = list(h.values)
    for k in range(1, len(h.knots) - 1):
        values[k] = max(h.limits(k))
    if tuple(values) == h.values:
        return h
    return DistortionFunction(h.knots, h.pieces, tuple(values))


def lsc_modification(h: DistortionFunction) -> DistortionFunction:
    return combine(usc_modification(combine(h, op="negate")), op="negate")


def is_usc(h: DistortionFunction, tol: float = 1e-12) -> bool:
    return all(abs(h.values[k] - max(h.limits(k))) <= tol for k in range(1, len(h.knots) - 1))


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def _merge_knots(a: Sequence[float], b: Sequence[float]) -> list[float]:
    out: list[float] = []
    for x in sorted(set(a) | set(b)):
        if out and x - out[-1] <= KNOT_TOL:
            continue
        out.append(x)
    out[-1] = 1.0
    return out


def _restate(h: DistortionFunction, knots: Sequence[float]) -> tuple[list[Expr], list[float]]:
    pieces = []
    for a, b in zip(knots, knots[1:]):
        pieces.append(h.pieces[h._piece_index(0.5 * (a + b))])
    values = [h.eval(x) for x in knots]
    return pieces, values


def combine(
    h1: DistortionFunction,
    h2: DistortionFunction | None = None,
    op: str = "difference",
    k: float = 1.0,
) -> DistortionFunction:
    """Pointwise ``h1 - h2``, ``h1 + h2``, ``-h1`` or ``k * h1``."""
    if op in ("negate", "scale"):
        factor = -1.0 if op == "negate" else float(k)
        desc = None
        if h1.descriptor is not None:
            desc = {"kind": "scale", "factor": factor, "base": h1.descriptor}
        return DistortionFunction(
            h1.knots,
            tuple(p.scaled(factor) for p in h1.pieces),
            tuple(0.0 if v == 0.0 else factor * v for v in h1.values),
            desc,
        )
    if h2 is None:
        raise ValueError(f"{op} needs two distortion functions")
    sign = {"difference": -1.0, "sum": 1.0}[op]
    knots = _merge_knots(h1.knots, h2.knots)
    p1, v1 = _restate(h1, knots)
    p2, v2 = _restate(h2, knots)
    pieces = tuple(a + b.scaled(sign) for a, b in zip(p1, p2))
    values = tuple(a + sign * b for a, b in zip(v1, v2))
    desc = None
    if h1.descriptor is not None and h2.descriptor is not None:
        desc = {"kind": op, "left": h1.descriptor, "right": h2.descriptor}
    return DistortionFunction(tuple(knots), pieces, values, desc)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"level {alpha} outside (0, 1)")
    return alpha


def make_linear(slope: float = 1.0) -> DistortionFunction:
    """h(t) = slope * t; slope 1 gives the expectation."""
    return DistortionFunction(
        (0.0, 1.0), (Expr.line(0.0, slope),), (0.0, float(slope)), {"kind": "linear", "slope": slope}
    )


def make_var(alpha: float) -> DistortionFunction:
    """Left quantile at level alpha: h = 1 on (1 - alpha, 1]."""
    alpha = _check_level(alpha)
    s = 1.0 - alpha
    return DistortionFunction(
        (0.0, s, 1.0), (Expr.constant(0.0), Expr.constant(1.0)), (0.0, 0.0, 1.0), {"kind": "var", "alpha": alpha}
    )


def make_var_plus(alpha: float) -> DistortionFunction:
    """Right quantile at level alpha: h = 1 on [1 - alpha, 1]."""
    alpha = _check_level(alpha)
    s = 1.0 - alpha
    return DistortionFunction(
        (0.0, s, 1.0),
        (Expr.constant(0.0), Expr.constant(1.0)),
        (0.0, 1.0, 1.0),
        {"kind": "var_plus", "alpha": alpha},
    )


def make_es(alpha: float) -> DistortionFunction:
    """Expected shortfall: h(t) = min(t / (1 - alpha), 1)."""
    alpha = _check_level(alpha)
    s = 1.0 - alpha
    return DistortionFunction(
        (0.0, s, 1.0),
        (Expr.line(0.0, 1.0 / s), Expr.constant(1.0)),
        (0.0, 1.0, 1.0),
        {"kind": "es", "alpha": alpha},
    )


def make_es_left(alpha: float) -> DistortionFunction:
    """Lower-tail average of quantiles on (0, alpha): h(t) = max(t - 1 + alpha, 0) / alpha."""
    alpha = _check_level(alpha)
    s = 1.0 - alpha
    return DistortionFunction(
        (0.0, s, 1.0),
        (Expr.constant(0.0), Expr.line(-s / alpha, 1.0 / alpha)),
        (0.0, 0.0, 1.0),
        {"kind": "es_left", "alpha": alpha},
    )


def make_tk(gamma: float) -> DistortionFunction:
    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma={gamma} outside (0, 1]")
    if gamma == 1.0:
        h = make_linear()
        return DistortionFunction(h.knots, h.pieces, h.values, {"kind": "tk", "gamma": gamma})
    return DistortionFunction((0.0, 1.0), (Expr((0.0,), ((1.0, gamma),)),), (0.0, 1.0), {"kind": "tk", "gamma": gamma})


def make_inter_quantile(alpha: float) -> DistortionFunction:
    """Inter-quantile range h = 1 on [1 - alpha, alpha], alpha in [1/2, 1)."""
    alpha = float(alpha)
    if not 0.5 <= alpha < 1.0:
        raise DomainError(f"alpha={alpha} outside [1/2, 1)")
    lo, hi = 1.0 - alpha, alpha
    desc = {"kind": "iqr", "alpha": alpha}
    if hi - lo <= KNOT_TOL:
        return DistortionFunction((0.0, 0.5, 1.0), (Expr.constant(0.0), Expr.constant(0.0)), (0.0, 1.0, 0.0), desc)
    return DistortionFunction(
        (0.0, lo, hi, 1.0),
        (Expr.constant(0.0), Expr.constant(1.0), Expr.constant(0.0)),
        (0.0, 1.0, 1.0, 0.0),
        desc,
    )


def make_piecewise_linear(xs: Iterable[float], ys: Iterable[float]) -> DistortionFunction:
    """Continuous piecewise-linear h through ``(xs[i], ys[i])``; xs must span [0, 1] and ys[0] = 0."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    pieces = []
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        slope = (y1 - y0) / (x1 - x0)
        pieces.append(Expr.line(y0 - slope * x0, slope))
    return DistortionFunction(tuple(xs), tuple(pieces), tuple(ys))


def from_dict(d: dict) -> DistortionFunction:
    kind = d["kind"]
    if kind == "tk":
        return make_tk(d["gamma"])
    if kind == "var":
        return make_var(d["alpha"])
    if kind == "var_plus":
        return make_var_plus(d["alpha"])
    if kind == "es":
        return make_es(d["alpha"])
    if kind == "es_left":
        return make_es_left(d["alpha"])
    if kind == "iqr":
        return make_inter_quantile(d["alpha"])
    if kind == "linear":
        return make_linear(d.get("slope", 1.0))
    if kind in ("difference", "sum"):
        return combine(from_dict(d["left"]), from_dict(d["right"]), op=kind)
    if kind == "scale":
        return combine(from_dict(d["base"]), op="scale", k=d["factor"])
    if kind == "piecewise":
        h = DistortionFunction(
            tuple(d["knots"]), tuple(Expr.from_list(p) for p in d["pieces"]), tuple(d["values"])
        )
        return DistortionFunction(h.knots, h.pieces, h.values, d)
    raise ValueError(f"unknown distortion kind {kind!r}")


def from_json(s: str) -> DistortionFunction:
    return from_dict(json.loads(s))
