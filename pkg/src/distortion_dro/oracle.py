"""Finite checks of the convexification equivalence.

The supremum of rho_h over a set closed under concentration within I_h equals
the supremum of rho_{h*}.  The proof rests on the exact identity
rho_{h*}(F) = rho_{h-hat}(F^{I_h}); this module evaluates both sides, builds
finite concentration closures and takes suprema over them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distortion import DistortionFunction, DomainError, make_piecewise_linear, usc_modification
from .envelope import concave_envelope
from .quantile import Discrete, IntervalSet, QuantileModel, concentrate, concentrate_multi, rho

#: Quantile levels used to identify models when deduplicating closures.
KEY_GRID = (np.arange(512) + 0.5) / 512
KEY_TOL = 1e-10


@dataclass(frozen=True)
class UncertaintySpec:
    """A membership predicate for one of the uncertainty-set families."""

    kind: str
    p: float = 2.0
    m: float = 0.0
    v: float = 1.0
    dominating: tuple = ()
    members: tuple = ()
    predicate: Callable[[QuantileModel], bool] | None = field(default=None, compare=False)

    @classmethod
    def moment(cls, p: float, m: float, v: float) -> "UncertaintySpec":
        return cls("moment", p=p, m=m, v=v)

    @classmethod
    def convex_order(cls, dominating: Sequence[QuantileModel]) -> "UncertaintySpec":
        return cls("convex_order", dominating=tuple(dominating))

    @classmethod
    def explicit(cls, members: Sequence[QuantileModel]) -> "UncertaintySpec":
        return cls("explicit", members=tuple(members))

    @classmethod
    def custom(cls, predicate: Callable[[QuantileModel], bool]) -> "UncertaintySpec":
        """Predicate-only sets, e.g. constraints on E[f(Y)] or on a riskmetric."""
        return cls("custom", predicate=predicate)

    def contains(self, F: QuantileModel, tol: float = 1e-10) -> bool:
        if self.kind == "moment":
            return F.in_moment_set(self.p, self.m, self.v, tol)
        if self.kind == "convex_order":
            return all(convex_dominated(F, Z, tol) for Z in self.dominating)
        if self.kind == "explicit":
            return any(same_model(F, G, tol) for G in self.members)
        if self.kind == "custom":
            return bool(self.predicate(F))
        raise ValueError(f"unknown set kind {self.kind!r}")


def _check_points(F: QuantileModel, Z: QuantileModel) -> np.ndarray:
    pts = []
    for G in (F, Z):
        if G.is_discrete:
            pts.extend(G.to_discrete().atoms.tolist())
        else:
            qs = G.quantiles(np.linspace(0.0, 1.0, 1025)[1:-1])
            pts.extend(qs[np.isfinite(qs)].tolist())
    return np.unique(pts)


def convex_dominated(F: QuantileModel, Z: QuantileModel, tol: float = 1e-10) -> bool:
    """F <=_cx Z: equal means and pointwise smaller stop-loss transforms.

    For two discrete laws both stop-loss transforms are piecewise linear with
    kinks at the atoms, so checking the union of atoms is exact.
    """
    if abs(F.mean - Z.mean) > tol * max(1.0, abs(Z.mean)):
        return False
    return all(F.stop_loss(k) <= Z.stop_loss(k) + tol for k in _check_points(F, Z))


def model_key(F: QuantileModel) -> np.ndarray:
    return F.quantiles(KEY_GRID)


def same_model(F: QuantileModel, G: QuantileModel, tol: float = KEY_TOL) -> bool:
    return bool(np.all(np.abs(model_key(F) - model_key(G)) <= tol))


# ---------------------------------------------------------------------------
# the identity behind the equivalence
# ---------------------------------------------------------------------------


def concentration_identity(h: DistortionFunction, F: QuantileModel) -> tuple[float, float]:
    """(rho_{h*}(F), rho_{h-hat}(F^{I_h})); the two agree whenever both are finite."""
    env = concave_envelope(h)
    h_hat = usc_modification(h)
    lhs = rho(env.envelope, F)
    rhs = rho(h_hat, concentrate_multi(F, env.reflected))
    return lhs, rhs


# ---------------------------------------------------------------------------
# closures and suprema
# ---------------------------------------------------------------------------


@dataclass
class Closure:
    models: list
    complete: bool  # False when the model budget stopped the search
    depth_reached: int

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)


def closure_generate(
    seed: QuantileModel, grid: IntervalSet | Sequence[tuple[float, float]], depth: int, budget: int = 10_000
) -> Closure:
    """Breadth-first closure of {seed} under single-interval concentrations."""
    intervals = [tuple(c) for c in (grid if isinstance(grid, IntervalSet) else grid)]
    if depth < 0:
        raise DomainError("depth must be non-negative")
    models = [seed]
    keys = [model_key(seed)]
    frontier = [seed]
    level = 0
    while level < depth and frontier:
        nxt = []
        for F in frontier:
            for C in intervals:
                G = concentrate(F, C)
                key = model_key(G)
                if any(np.all(np.abs(key - k) <= KEY_TOL) for k in keys):
                    continue
                if len(models) >= budget:
                    return Closure(models, False, level)
                models.append(G)
                keys.append(key)
                nxt.append(G)
        frontier = nxt
        level += 1
    return Closure(models, not frontier or level >= depth, level)


def close_within(models: Sequence[QuantileModel], intervals: IntervalSet, budget: int = 10_000) -> Closure:
    """Smallest superset closed under concentration within ``intervals``.

    Concentrations over disjoint intervals commute and are idempotent, so the
    fixed point is reached after at most len(intervals) rounds.
    """
    out: list = []
    for F in models:
        cl = closure_generate(F, intervals, len(intervals) + 1, budget)
        for G in cl.models:
            if not any(same_model(G, H) for H in out):
                out.append(G)
    return Closure(out, True, len(intervals))


def sup_over_set(h: DistortionFunction, models: Sequence[QuantileModel]) -> tuple[float, int]:
    """Largest rho_h over a finite list; ties go to the lowest index."""
    models = list(models)
    if not models:
        raise DomainError("empty set")
    best, arg = -math.inf, -1
    for i, F in enumerate(models):
        val = rho(h, F)
        if val > best:
            best, arg = val, i
    return best, arg


# ---------------------------------------------------------------------------
# seeded random instances
# ---------------------------------------------------------------------------


def random_distortion(rng: np.random.Generator, max_knots: int = 6) -> DistortionFunction:
    """Continuous piecewise-linear h with h(0) = 0 and at most ``max_knots`` knots."""
    k = int(rng.integers(2, max_knots + 1))
    inner = np.sort(rng.uniform(0.02, 0.98, size=k - 2))
    xs = np.concatenate([[0.0], inner, [1.0]])
    while np.any(np.diff(xs) < 1e-3):
        inner = np.sort(rng.uniform(0.02, 0.98, size=k - 2))
        xs = np.concatenate([[0.0], inner, [1.0]])
    ys = np.concatenate([[0.0], rng.uniform(-1.0, 1.5, size=k - 1)])
    return make_piecewise_linear(xs, ys)


def random_discrete(rng: np.random.Generator, max_atoms: int = 8) -> Discrete:
    n = int(rng.integers(1, max_atoms + 1))
    atoms = np.round(rng.normal(0.0, 2.0, size=n), 3)
    probs = rng.dirichlet(np.ones(n))
    return Discrete(atoms, probs)


__all__ = [
    "UncertaintySpec",
    "convex_dominated",
    "same_model",
    "concentration_identity",
    "Closure",
    "closure_generate",
    "close_within",
    "sup_over_set",
    "random_distortion",
    "random_discrete",
]
