import numpy as np
import pytest

from distortion_dro.distortion import make_tk, make_var, make_var_plus, usc_modification
from distortion_dro.envelope import concave_envelope
from distortion_dro.oracle import (
    UncertaintySpec,
    close_within,
    closure_generate,
    concentration_identity,
    convex_dominated,
    random_discrete,
    random_distortion,
    same_model,
    sup_over_set,
)
from distortion_dro.quantile import Discrete, IntervalSet, Normal, Uniform, concentrate, rho


def test_identity_on_var_uniform():
    lhs, rhs = concentration_identity(make_var_plus(0.9), Uniform())
    assert lhs == pytest.approx(0.95, abs=1e-12) and rhs == pytest.approx(0.95, abs=1e-12)


def test_identity_on_tk_normal():
    lhs, rhs = concentration_identity(make_tk(0.7), Normal(1, 2))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_identity_random(seed):
    rng = np.random.default_rng(seed)
    lhs, rhs = concentration_identity(random_distortion(rng), random_discrete(rng))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_dyadic_closure():
    cl = closure_generate(Discrete([0, 1, 2, 3]), [(0.0, 0.5), (0.5, 1.0), (0.25, 0.75)], depth=2)
    assert cl.complete
    assert all(G.mean == pytest.approx(1.5) for G in cl)
    assert len({tuple(np.round(G.quantiles([0.125, 0.375, 0.625, 0.875]), 12)) for G in cl}) == len(cl)


@pytest.mark.parametrize("seed", range(10))
def test_sup_equivalence_on_closed_sets(seed):
    rng = np.random.default_rng(100 + seed)
    h = random_distortion(rng)
    env = concave_envelope(h)
    seeds = [random_discrete(rng) for _ in range(3)]
    models = list(close_within(seeds, env.reflected))
    s_h, _ = sup_over_set(usc_modification(h), models)
    s_star, _ = sup_over_set(env.envelope, models)
    assert s_h == pytest.approx(s_star, abs=1e-10)
    assert sup_over_set(h, models)[0] <= s_star + 1e-12


def test_sup_tie_break_lowest_index():
    F = Discrete([1.0])
    assert sup_over_set(make_var(0.5), [F, F])[1] == 0


def test_convex_order_of_concentration():
    F = Discrete([0.0, 1.0, 5.0], [0.3, 0.5, 0.2])
    G = concentrate(F, (0.2, 0.9))
    assert convex_dominated(G, F)
    assert not convex_dominated(F, G)


def test_uncertainty_specs():
    F = Discrete([-1.0, 1.0])
    assert UncertaintySpec.moment(2, 0, 1).contains(F)
    assert not UncertaintySpec.moment(2, 0, 0.5).contains(F)
    assert UncertaintySpec.convex_order([Discrete([-2.0, 2.0])]).contains(F)
    assert UncertaintySpec.explicit([Discrete([1.0, -1.0])]).contains(F)
    assert UncertaintySpec.custom(lambda G: G.mean == 0).contains(F)
    assert same_model(F, Discrete([1.0, -1.0]))
