"""Concave and convex envelopes of distortion functions.

The upper hull is computed on the closed graph of the upper semicontinuous
modification: linear pieces contribute their end points, smooth pieces a dense
cosine-clustered sample, and every knot contributes the largest of its
one-sided limits and point value.  Hull edges whose end points sit inside a
smooth piece are then moved onto the exact tangency points by root finding,
so the envelope is symbolic: contact regions reuse the original expressions
and divergence regions are explicit chords.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .distortion import (
    DistortionFunction,
    DomainError,
    Expr,
    combine,
    make_tk,
    tk_derivative,
    tk_value,
)
from .quantile import IntervalSet

#: Divergence intervals shorter than this are dropped as numerical noise.
MIN_INTERVAL = 1e-9
SMOOTH_SAMPLES = 4097
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class EnvelopeResult:
    envelope: DistortionFunction
    divergence: IntervalSet
    kind: str = "concave"

    @property
    def reflected(self) -> IntervalSet:
        """The set I_h = {(1 - b, 1 - a)} used for concentration."""
        return self.divergence.reflected()

    def linear_flags(self) -> list[bool]:
        flags = []
        for a, b in zip(self.envelope.knots, self.envelope.knots[1:]):
            mid = 0.5 * (a + b)
            flags.append(any(lo <= mid <= hi for lo, hi in self.divergence))
        return flags

    def to_dict(self) -> dict:
        g = lambda x: float(f"{x:.15g}")
        env = self.envelope
        return {
            "kind": self.kind,
            "knots": [g(x) for x in env.knots],
            "values": [g(v) for v in env.values],
            "linear": self.linear_flags(),
            "divergence_intervals": [[g(a), g(b)] for a, b in self.divergence],
            "I_h": [[g(a), g(b)] for a, b in self.reflected],
            "envelope": env.to_dict(),
        }


# ---------------------------------------------------------------------------
# hull machinery
# ---------------------------------------------------------------------------


@dataclass
class _Vertex:
    x: float
    y: float
    piece: int | None  # smooth piece index when the vertex is an interior sample
    idx: int = -1  # sample position inside that piece


def _upper_hull(pts: list[_Vertex]) -> list[_Vertex]:
    hull: list[_Vertex] = []
    for p in pts:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (a.x - o.x) * (p.y - o.y) - (a.y - o.y) * (p.x - o.x)
            scale = 1e-14 * (abs(p.x - o.x) + 1.0) * (abs(p.y) + abs(o.y) + 1.0)
            if cross > scale:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _hat_value(h: DistortionFunction, k: int) -> float:
    left, mid, right = h.limits(k)
    if k == 0:
        return max(mid, right)
    if k == len(h.knots) - 1:
        return max(left, mid)
    return max(left, mid, right)


def _samples(h: DistortionFunction) -> tuple[list[_Vertex], dict[int, np.ndarray]]:
    verts: dict[float, _Vertex] = {}
    grids: dict[int, np.ndarray] = {}

    def put(v: _Vertex):
        old = verts.get(v.x)
        if old is None or v.y > old.y:
            verts[v.x] = v

    for i, piece in enumerate(h.pieces):
        a, b = h.knots[i], h.knots[i + 1]
        if piece.is_linear:
            continue
        u = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, SMOOTH_SAMPLES)))
        g = a + (b - a) * u
        grids[i] = g
        ys = piece(g)
        for j in range(1, len(g) - 1):
            put(_Vertex(float(g[j]), float(ys[j]), i, j))
    for k, x in enumerate(h.knots):
        put(_Vertex(x, _hat_value(h, k), None))
    return [verts[x] for x in sorted(verts)], grids


def _on_chord(h: DistortionFunction, va: _Vertex, vb: _Vertex, tol: float = 1e-11) -> bool:
    """Whether the graph of the usc modification coincides with the chord va-vb."""
    if va.piece is not None and va.piece == vb.piece and vb.idx == va.idx + 1:
        return True
    # a knot next to the first or last sample of a piece that is continuous there
    if va.piece is None and vb.piece is not None and vb.idx == 1:
        i = vb.piece
        if va.x == h.knots[i] and abs(float(h.pieces[i](va.x)) - va.y) <= tol:
            return True
    if vb.piece is None and va.piece is not None and va.idx == SMOOTH_SAMPLES - 2:
        i = va.piece
        if vb.x == h.knots[i + 1] and abs(float(h.pieces[i](vb.x)) - vb.y) <= tol:
            return True
    slope = (vb.y - va.y) / (vb.x - va.x)
    chord = lambda x: va.y + slope * (x - va.x)
    for i, piece in enumerate(h.pieces):
        a, b = max(h.knots[i], va.x), min(h.knots[i + 1], vb.x)
        if b <= a:
            continue
        if not piece.is_linear:
            # a smooth stretch between non-adjacent samples is not on a chord
            grid = np.linspace(a, b, 9)
            if np.max(np.abs(piece(grid) - chord(grid))) > tol:
                return False
            continue
        if abs(float(piece(a)) - chord(a)) > tol or abs(float(piece(b)) - chord(b)) > tol:
            return False
    for k, x in enumerate(h.knots):
        if va.x < x < vb.x and abs(_hat_value(h, k) - chord(x)) > tol:
            return False
    return True


def _solve_tangent(piece: Expr, lo: float, hi: float, guess: float, px: float, py: float, grid: np.ndarray) -> float:
    """Point s in (lo, hi) where the tangent of ``piece`` passes through (px, py)."""

    def f(s):
        return float(piece(s)) - py - float(piece.derivative(s)) * (s - px)

    j = int(np.clip(np.searchsorted(grid, guess), 1, len(grid) - 2))
    for width in (2, 8, 32, 128, len(grid)):
        a = float(grid[max(j - width, 0)])
        b = float(grid[min(j + width, len(grid) - 1)])
        a = max(a, lo + 1e-14 * (hi - lo))
        b = min(b, hi - 1e-14 * (hi - lo))
        fa, fb = f(a), f(b)
        if math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0:
            return _bisect(f, a, b, fa)
    return guess


def _bisect(f, a: float, b: float, fa: float) -> float:
    for _ in range(MAX_BISECTIONS):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0 or b - a <= 1e-16 * max(1.0, abs(m)):
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _refine(h: DistortionFunction, va: _Vertex, vb: _Vertex, grids) -> tuple[_Vertex, _Vertex]:
    """Move smooth end points of a divergence chord onto exact tangency points."""
    for _ in range(100):
        moved = 0.0
        if va.piece is not None:
            i = va.piece
            s = _solve_tangent(h.pieces[i], h.knots[i], h.knots[i + 1], va.x, vb.x, vb.y, grids[i])
            moved = max(moved, abs(s - va.x))
            va = _Vertex(s, float(h.pieces[i](s)), i, va.idx)
        if vb.piece is not None:
            i = vb.piece
            s = _solve_tangent(h.pieces[i], h.knots[i], h.knots[i + 1], vb.x, va.x, va.y, grids[i])
            moved = max(moved, abs(s - vb.x))
            vb = _Vertex(s, float(h.pieces[i](s)), i, vb.idx)
        if va.piece is None or vb.piece is None or moved <= 1e-15:
            break
    return va, vb


def concave_envelope(h: DistortionFunction) -> EnvelopeResult:
    """Smallest concave function dominating h, with the intervals where it exceeds the usc modification."""
    pts, grids = _samples(h)
    hull = _upper_hull(pts)
    chords: list[tuple[_Vertex, _Vertex]] = []
    for va, vb in zip(hull, hull[1:]):
        if not _on_chord(h, va, vb):
            chords.append(_refine(h, va, vb, grids))
    chords = [(a, b) for a, b in chords if b.x - a.x > MIN_INTERVAL]

    inside = lambda x: any(a.x < x < b.x for a, b in chords)
    knots = {0.0, 1.0}
    knots.update(x for x in h.knots if not inside(x))
    for a, b in chords:
        knots.update((a.x, b.x))
    knots = sorted(knots)
    merged = [knots[0]]
    for x in knots[1:]:
        if x - merged[-1] > 1e-15:
            merged.append(x)
    merged[-1] = 1.0
    knots = merged

    pieces = []
    for a, b in zip(knots, knots[1:]):
        mid = 0.5 * (a + b)
        chord = next(((va, vb) for va, vb in chords if va.x <= mid <= vb.x), None)
        if chord is not None:
            va, vb = chord
            slope = (vb.y - va.y) / (vb.x - va.x)
            pieces.append(Expr.line(va.y - slope * va.x, slope))
        else:
            pieces.append(h.pieces[h._piece_index(mid)])
    chord_ends = {}
    for va, vb in chords:
        chord_ends[va.x] = va.y
        chord_ends[vb.x] = vb.y
    values = []
    for x in knots:
        if x == 0.0:
            values.append(0.0)
        elif x == 1.0:
            values.append(h.value_at_one)
        elif x in chord_ends:
            values.append(chord_ends[x])
        else:
            k = h._knot_index(x)
            values.append(_hat_value(h, k) if k is not None else float(h.pieces[h._piece_index(x)](x)))
    env = DistortionFunction(tuple(knots), tuple(pieces), tuple(values))
    env = _drop_redundant_knots(env)
    div = IntervalSet(tuple((a.x, b.x) for a, b in chords))
    return EnvelopeResult(env, div, "concave")


def _drop_redundant_knots(h: DistortionFunction) -> DistortionFunction:
    keep = [0]
    for k in range(1, len(h.knots) - 1):
        left, mid, right = h.limits(k)
        same = h.pieces[k - 1] == h.pieces[k]
        if not (same and abs(left - mid) <= 1e-15 and abs(right - mid) <= 1e-15):
            keep.append(k)
    keep.append(len(h.knots) - 1)
    if len(keep) == len(h.knots):
        return h
    knots = tuple(h.knots[k] for k in keep)
    values = tuple(h.values[k] for k in keep)
    pieces = tuple(h.pieces[k] for k in keep[:-1])
    return DistortionFunction(knots, pieces, values)


def convex_envelope(h: DistortionFunction) -> EnvelopeResult:
    """Largest convex minorant, computed as the reflection of the concave envelope of -h."""
    res = concave_envelope(combine(h, op="negate"))
    return EnvelopeResult(combine(res.envelope, op="negate"), res.divergence, "convex")


# ---------------------------------------------------------------------------
# dense-grid fallback
# ---------------------------------------------------------------------------


def grid_hull(h: DistortionFunction, n: int = 100_001, upper: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Hull vertices of the sampled closed graph (both one-sided limits at jumps)."""
    sign = 1.0 if upper else -1.0
    x = np.linspace(0.0, 1.0, n)
    y = sign * h(x)
    extra_x, extra_y = [], []
    for k, kx in enumerate(h.knots):
        lims = [sign * v for v in h.limits(k)]
        if k == 0:
            lims = lims[1:]
        if k == len(h.knots) - 1:
            lims = lims[:2]
        extra_x.append(kx)
        extra_y.append(max(lims))
    x = np.concatenate([x, extra_x])
    y = np.concatenate([y, extra_y])
    order = np.lexsort((-y, x))
    x, y = x[order], y[order]
    first = np.ones(x.size, dtype=bool)
    first[1:] = x[1:] != x[:-1]
    x, y = x[first], y[first]
    hx: list[float] = []
    hy: list[float] = []
    for px, py in zip(x, y):
        while len(hx) >= 2 and (hx[-1] - hx[-2]) * (py - hy[-2]) - (hy[-1] - hy[-2]) * (px - hx[-2]) >= 0:
            hx.pop()
            hy.pop()
        hx.append(float(px))
        hy.append(float(py))
    return np.asarray(hx), sign * np.asarray(hy)


def grid_envelope_values(h: DistortionFunction, t, n: int = 100_001, upper: bool = True) -> np.ndarray:
    hx, hy = grid_hull(h, n, upper)
    return np.interp(np.asarray(t, dtype=float), hx, hy)


# ---------------------------------------------------------------------------
# TK tangency
# ---------------------------------------------------------------------------


def tk_tangency(gamma: float) -> float:
    """Contact point t0 of the TK concave envelope: the chord from t0 to (1, 1) is tangent at t0."""
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma={gamma} outside (0, 1)")

    def r(t):
        return (1.0 - float(tk_value(t, gamma))) / (1.0 - t) - float(tk_derivative(t, gamma))

    grid = np.linspace(1e-9, 1.0 - 1e-9, 4001)
    prev_t, prev_r = grid[0], r(grid[0])
    for t in grid[1:]:
        rt = r(t)
        if prev_r < 0.0 <= rt:
            return _bisect(r, float(prev_t), float(t), prev_r)
        prev_t, prev_r = t, rt
    raise ArithmeticError(f"no tangency found for gamma={gamma}")


def tk_envelope_norm_inputs(gamma: float) -> tuple[float, float]:
    """(t0, chord slope) of the TK concave envelope."""
    t0 = tk_tangency(gamma)
    return t0, (1.0 - float(tk_value(t0, gamma))) / (1.0 - t0)


__all__ = [
    "EnvelopeResult",
    "concave_envelope",
    "convex_envelope",
    "grid_hull",
    "grid_envelope_values",
    "tk_tangency",
    "make_tk",
]
