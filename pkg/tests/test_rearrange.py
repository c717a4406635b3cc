import numpy as np
import pytest
from hypothesis import given, strategies as st

from distortion_dro.distortion import DomainError, make_tk, make_var
from distortion_dro.envelope import concave_envelope
from distortion_dro.quantile import Discrete, Exponential, Normal, Pareto, Uniform, rho, weighted_sum_comonotone
from distortion_dro.rearrange import RAParams, discretize, grid_levels, ra_iterate, ra_lower_bound


def test_grid_levels():
    assert np.allclose(grid_levels(4), [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(grid_levels(2, "tail", 0.9), [0.925, 0.975])


def test_discretize_degenerate_columns():
    M = discretize([Discrete([2.0]), Discrete([-1.0])], [1.0, 1.0], 10)
    assert np.all(M.values[:, 0] == 2.0) and np.all(M.values[:, 1] == -1.0)


def test_discretize_rejects_bad_weights():
    with pytest.raises(DomainError):
        discretize([Uniform()], [-1.0], 10)
    with pytest.raises(DomainError):
        discretize([Uniform(), Uniform()], [1.0], 10)


def test_single_column_is_identity():
    M = discretize([Normal()], [1.0], 50)
    res = ra_iterate(M)
    assert np.array_equal(res.matrix.values, M.values) and res.converged


def test_columns_stay_permutations():
    M = discretize([Exponential(1.0), Normal(), Uniform()], [0.3, 0.3, 0.4], 500)
    res = ra_iterate(M, seed=3)
    for j in range(3):
        assert np.allclose(np.sort(res.matrix.values[:, j]), np.sort(M.values[:, j]))


@given(st.integers(0, 1000), st.integers(2, 5))
def test_tail_objective_non_decreasing(seed, n):
    rng = np.random.default_rng(seed)
    marg = [Exponential(float(r)) for r in rng.uniform(0.5, 2.0, n)]
    M = discretize(marg, np.full(n, 1.0 / n), 200, "tail", 0.9)
    res = ra_iterate(M, seed=seed)
    hist = np.array(res.history)
    assert np.all(np.diff(hist) >= -1e-12)


def test_deterministic_given_seed():
    marg = [Pareto(3.0, 1.0, -1.0), Exponential(1.0), Normal()]
    a = ra_lower_bound(make_tk(0.7), marg, [0.2, 0.3, 0.5], RAParams(N=2000, seed=5))
    b = ra_lower_bound(make_tk(0.7), marg, [0.2, 0.3, 0.5], RAParams(N=2000, seed=5))
    assert a == b


def test_uniform_var_worst_case():
    # three U(0,1) at alpha=0.95: the worst VaR equals the conditional tail mean 3 * 0.975 when the tail can be flattened
    val = ra_lower_bound(None, [Uniform()] * 3, [1.0, 1.0, 1.0], RAParams(N=1000, mode="tail", alpha=0.95))
    assert val == pytest.approx(2.925, abs=2e-3)


def test_degenerate_marginals_exact():
    h = make_tk(0.7)
    val = ra_lower_bound(h, [Discrete([2.0]), Discrete([3.0])], [0.4, 0.6], RAParams(N=100))
    assert val == pytest.approx(0.4 * 2 + 0.6 * 3, abs=1e-14)


def test_tk_uniform_gap():
    h = make_tk(0.7)
    env = concave_envelope(h).envelope
    upper = weighted_sum_comonotone(env, [1 / 3] * 3, [Uniform()] * 3)
    lower = ra_lower_bound(h, [Uniform()] * 3, [1 / 3] * 3)
    assert lower <= upper + 1e-6
    gap = (upper - lower) / lower
    assert 0.05 <= gap <= 0.30


@pytest.mark.parametrize("seed", range(4))
def test_lower_bound_below_convex_value(seed):
    rng = np.random.default_rng(seed)
    marg = [Exponential(float(r)) for r in rng.uniform(0.5, 2, 4)]
    w = rng.dirichlet(np.ones(4))
    h = make_tk(0.7)
    env = concave_envelope(h).envelope
    assert ra_lower_bound(h, marg, w, RAParams(N=2000, seed=seed)) <= weighted_sum_comonotone(env, w, marg) + 1e-6
    var_lb = ra_lower_bound(None, marg, w, RAParams(N=2000, mode="tail", alpha=0.95, seed=seed))
    from distortion_dro.distortion import make_es

    assert var_lb <= weighted_sum_comonotone(make_es(0.95), w, marg) + 1e-6


def test_body_top_keeps_upper_rows_comonotone():
    M = discretize([Exponential(1.0), Exponential(2.0)], [0.5, 0.5], 100)
    res = ra_iterate(M, body_top=0.2)
    top = M.levels >= 0.8
    assert np.array_equal(res.matrix.values[top], M.values[top])
