import math

import numpy as np
import pytest
from scipy import integrate, optimize

from distortion_dro.distortion import (
    DomainError,
    combine,
    make_es,
    make_linear,
    make_piecewise_linear,
    make_tk,
    make_var,
    make_var_plus,
)
from distortion_dro.envelope import concave_envelope
from distortion_dro.moments import (
    MomentConstraint,
    ZeroNormError,
    best_case,
    bound_report,
    extremal_quantile,
    q_center,
    q_norm,
    q_norm_es,
    q_norm_es_inf,
    worst_case,
)
from distortion_dro.oracle import random_distortion
from distortion_dro.quantile import rho


def _es_norm_oracle(alpha, q):
    # h*' takes the value 1/(1-alpha) on a set of measure 1-alpha and 0 elsewhere
    s = 1 - alpha
    g = lambda c: s * (1 / s - c) ** (q - 1) - alpha * c ** (q - 1)
    c = optimize.brentq(g, 0.0, 1 / s, xtol=1e-15)
    return (s * (1 / s - c) ** q + alpha * c**q) ** (1 / q)


def _golden_center(h, q):
    """Argmin of x -> int |h' - x|^q by golden-section search (test oracle)."""
    env = h

    def cost(x):
        total = 0.0
        for i, p in enumerate(env.pieces):
            a, b = env.knots[i], env.knots[i + 1]
            # t = a + (b - a) s^10 removes the end-point singularity of TK derivatives
            f = lambda s, p=p, a=a, b=b: abs(float(p.derivative(a + (b - a) * s**10)) - x) ** q * 10 * s**9 * (b - a)
            total += integrate.quad(f, 0, 1, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
        return total

    res = optimize.minimize_scalar(cost, bracket=(-5, 0.5, 5), method="golden", tol=1e-10)
    return res.x, cost(res.x) ** (1 / q)


@pytest.mark.parametrize("alpha", [0.5, 0.9, 0.95])
@pytest.mark.parametrize("m", [-1.0, 0.0, 2.5])
@pytest.mark.parametrize("v", [0.1, 1.0, 3.0])
def test_cantelli(alpha, m, v):
    val = worst_case(make_var(alpha), MomentConstraint(2, m, v)).value
    assert val == pytest.approx(m + v * math.sqrt(alpha / (1 - alpha)), abs=1e-9)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
@pytest.mark.parametrize("alpha", [0.5, 0.9, 0.95, 0.99])
def test_es_norm_closed_form(p, alpha):
    q = p / (p - 1)
    assert q_norm_es(alpha, p) == pytest.approx(_es_norm_oracle(alpha, q), rel=1e-12)
    assert q_norm(make_es(alpha), q) == pytest.approx(q_norm_es(alpha, p), abs=1e-8)


def test_var_best_case_coefficient():
    a, p = 0.9, 3.0
    bc = best_case(make_var(a), MomentConstraint(p, 0.0, 1.0)).value
    assert bc == pytest.approx(q_norm_es_inf(a, p), abs=1e-9)


def test_es_best_case_is_mean():
    # ES is concave, so its convex envelope is the chord t and the infimum is m
    assert best_case(make_es(0.9), MomentConstraint(3.0, 0.7, 1.0)).value == pytest.approx(0.7)


def test_var_best_case_example():
    # infimum of VaR under M^2(m, v) is m - v sqrt((1-alpha)/alpha)
    a = 0.9
    bc = best_case(make_var(a), MomentConstraint(2, 1.0, 2.0)).value
    assert bc == pytest.approx(1.0 - 2.0 * math.sqrt((1 - a) / a), abs=1e-9)


def test_diff_tk_norm():
    env = concave_envelope(combine(make_tk(0.8), make_tk(0.7))).envelope
    assert q_norm(env, 2.0) == pytest.approx(0.3345, abs=1e-3)
    assert q_norm(env, 2.0) == pytest.approx(0.33454378, abs=1e-7)


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0])
def test_center_against_golden_section(q):
    for h in (concave_envelope(make_tk(0.7)).envelope, make_piecewise_linear([0, 0.3, 1], [0, 0.9, 1.0])):
        cn = q_center(h, q)
        c_ref, n_ref = _golden_center(h, q)
        assert cn.center == pytest.approx(c_ref, abs=1e-6)
        assert cn.norm == pytest.approx(n_ref, rel=1e-8)


def test_tk_norm_divergence_threshold():
    assert math.isinf(q_norm(concave_envelope(make_tk(0.5)).envelope, 2.0))
    assert math.isfinite(q_norm(concave_envelope(make_tk(0.55)).envelope, 2.0))
    assert math.isinf(worst_case(make_tk(0.5), MomentConstraint(2, 0, 1)).value)


def test_tk_norm_values():
    for g, ref in ((0.6, 0.77598), (0.7, 0.38812), (0.8, 0.20506), (0.9, 0.08724)):
        assert q_norm(concave_envelope(make_tk(g)).envelope, 2.0) == pytest.approx(ref, abs=1e-5)


def test_attainment_flags():
    mc = MomentConstraint(2, 0.0, 1.0)
    assert not worst_case(make_var(0.9), mc).attained
    assert worst_case(make_var_plus(0.9), mc).attained
    assert best_case(make_var(0.9), mc).attained
    assert not best_case(make_var_plus(0.9), mc).attained


def test_linear_distortion_zero_norm():
    mc = MomentConstraint(2, 1.5, 2.0)
    res = worst_case(make_linear(2.0), mc)
    assert res.value == pytest.approx(3.0) and res.extremal is None
    with pytest.raises(ZeroNormError):
        extremal_quantile(make_linear(), mc)


def test_degenerate_variance():
    res = worst_case(make_tk(0.7), MomentConstraint(2, 2.0, 0.0))
    assert res.value == pytest.approx(2.0)


def test_moment_constraint_domain():
    with pytest.raises(DomainError):
        MomentConstraint(1.0, 0, 1)
    with pytest.raises(DomainError):
        MomentConstraint(2.0, 0, -1)


def test_bound_report_keys():
    rep = bound_report(make_var_plus(0.95), MomentConstraint(2, 0, 1))
    assert rep["attained_sup"] and rep["extremal_quantile_sup"]
    assert rep["value_sup"] == pytest.approx(math.sqrt(19), abs=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_extremal_quantile_loop(seed):
    rng = np.random.default_rng(seed)
    h = random_distortion(rng)
    p = float(rng.choice([1.5, 2.0, 3.0]))
    mc = MomentConstraint(p, float(rng.normal()), float(rng.uniform(0.2, 2)))
    res = worst_case(h, mc)
    if res.extremal is None:
        pytest.skip("zero norm")
    F = res.extremal
    assert mc.contains(F, tol=1e-8)
    assert rho(h, F) == pytest.approx(res.value, abs=1e-8)
    lo = best_case(h, mc)
    assert lo.value <= res.value + 1e-12
    if lo.extremal is not None:
        assert rho(h, lo.extremal) == pytest.approx(lo.value, abs=1e-8)


def test_tk_extremal_quantile():
    h, mc = make_tk(0.7), MomentConstraint(2, 1.0, 0.5)
    res = worst_case(h, mc)
    assert res.attained
    assert mc.contains(res.extremal, tol=1e-8)
    assert rho(h, res.extremal) == pytest.approx(res.value, abs=1e-8)
