"""Acceptance suite: one PASS/FAIL line per criterion, printed at the end of the session.

Each test records its verdict before asserting, so a failing criterion is
still reported with the numbers behind it.
"""
import math
import time

import numpy as np
import pytest

from distortion_dro.distortion import combine, make_es, make_tk, make_var, make_var_plus, usc_modification
from distortion_dro.envelope import concave_envelope
from distortion_dro.moments import MomentConstraint, q_norm, worst_case
from distortion_dro.oracle import close_within, concentration_identity, convex_dominated, random_discrete, random_distortion, sup_over_set
from distortion_dro.portfolio import solve_marginal_convex
from distortion_dro.quantile import Discrete, IntervalSet, concentrate_multi, rho
from distortion_dro.tables import (
    ALPHA,
    MARGINAL_ROWS_TK,
    MARGINAL_ROWS_VAR,
    TK_GAMMA,
    box_for,
    family,
    marginal_table,
    table1,
    table2,
)

RESULTS: dict[int, str] = {}

TABLE1 = [
    ([0.333, 0.333, 0.333], 0.193),
    ([0.300, 0.400, 0.300], 0.150),
    ([0.997, 0.002, 0.001], 0.335),
    ([0.438, 0.219, 0.146, 0.110, 0.088], 0.221),
]
TABLE2 = [
    ([0.333, 0.333, 0.333], 0.610, 1.41),
    ([0.000, 0.500, 0.500], 0.676, 1.29),
    ([0.300, 0.400, 0.300], 0.690, 1.17),
    ([0.500, 0.331, 0.168], 0.630, 1.57),
    ([0.438, 0.219, 0.146, 0.110, 0.088], 0.678, 1.26),
]
V_VAR = {
    3: [3.547, 3.197, 3.156, 5.766, 4.082, 4.132, 4.251, 3.892, 4.230],
    4: [3.546, 3.204, 3.162, 5.766, 4.084, 4.133, 4.369, 3.916, 4.236],
}
V_ES = {
    3: [3.741, 3.215, 3.159, 5.785, 4.083, 4.132, 4.405, 3.893, 4.230],
    4: [3.741, 3.220, 3.163, 5.785, 4.084, 4.133, 4.422, 3.916, 4.236],
}
V_HSTAR = {
    5: [1.185, 1.237, 1.501, 1.493, 1.363, 1.316, 1.427, 1.484, 1.286],
    6: [1.185, 1.237, 1.501, 1.493, 1.363, 1.316, 1.430, 1.485, 1.289],
}


def record(k: int, ok: bool, detail: str, seconds: float, budget: float) -> None:
    fast = seconds < budget
    RESULTS[k] = f"criterion {k:2d}: {'PASS' if ok and fast else 'FAIL'}  {detail}  [{seconds:.1f}s / {budget:.0f}s]"
    assert ok, RESULTS[k]
    assert fast, RESULTS[k]


def rel(x, y):
    return abs(x - y) / abs(y)


def test_c01_cantelli():
    t = time.perf_counter()
    err = 0.0
    for alpha in (0.5, 0.9, 0.99):
        for m in (-1.0, 0.0, 2.5):
            for v in (0.1, 1.0, 3.0):
                val = worst_case(make_var(alpha), MomentConstraint(2, m, v)).value
                err = max(err, abs(val - (m + v * math.sqrt(alpha / (1 - alpha)))))
    record(1, err <= 1e-9, f"max abs err {err:.2e} (tol 1e-9, 27 cases)", time.perf_counter() - t, 1)


def test_c02_general_p_closed_form():
    t = time.perf_counter()
    err = 0.0
    for p in (1.5, 2.0, 3.0, 5.0):
        q = p / (p - 1)
        for a in (0.5, 0.9, 0.95, 0.99):
            closed = a * (a**p * (1 - a) + (1 - a) ** p * a) ** (-1 / p)
            for h in (make_es(a), make_var(a)):
                err = max(err, abs(q_norm(concave_envelope(h).envelope, q) - closed))
    record(2, err <= 1e-8, f"max abs err {err:.2e} (tol 1e-8, ES and VaR)", time.perf_counter() - t, 5)


def test_c03_difference_of_tk():
    t = time.perf_counter()
    env = concave_envelope(combine(make_tk(0.8), make_tk(0.7)))
    norm = q_norm(env.envelope, 2.0)
    (I,) = env.reflected.intervals
    (D,) = env.divergence.intervals
    ok = abs(norm - 0.3345) <= 1e-3 and abs(I[0] - 0.2422) <= 2e-3 and abs(I[1] - 1) <= 2e-3 and abs(D[1] - 0.7578) <= 2e-3
    detail = f"[h*]_2={norm:.5f} I_h=({I[0]:.4f}, {I[1]:.4f}) boundary={D[1]:.4f}"
    record(3, ok, detail, time.perf_counter() - t, 5)


def test_c04_table1():
    t = time.perf_counter()
    rows = table1()
    da = max(np.max(np.abs(np.array(r["a_star"]) - a)) for r, (a, _) in zip(rows, TABLE1))
    dD = max(abs(r["D"] - D) for r, (_, D) in zip(rows, TABLE1))
    record(4, da <= 5e-3 and dD <= 2e-3, f"max |da|={da:.1e} max |dD|={dD:.1e}", time.perf_counter() - t, 30)


def test_c05_table2():
    t = time.perf_counter()
    rows = table2()
    bad = []
    for i, (r, (a, g, V)) in enumerate(zip(rows, TABLE2), 1):
        da = float(np.max(np.abs(np.array(r["a_star"]) - a)))
        if abs(r["V"] - V) > 0.02 or abs(r["gamma_hat"] - g) > 0.01 or da > 5e-3:
            bad.append(f"row {i}: V={r['V']:.3f} gamma={r['gamma_hat']:.3f} a={np.round(r['a_star'], 3).tolist()}")
    detail = "all 5 rows match" if not bad else "; ".join(bad)
    record(5, not bad, detail, time.perf_counter() - t, 300)


def test_c06_es_columns():
    t = time.perf_counter()
    worst = 0.0
    for tid in (3, 4):
        for (fam, n, c), ref in zip(MARGINAL_ROWS_VAR, V_ES[tid]):
            lo, hi = box_for(tid, n)
            v = solve_marginal_convex(make_es(ALPHA), family(fam, n), lo, hi, c).value
            worst = max(worst, rel(v, ref))
    record(6, worst <= 5e-3, f"max rel err {100 * worst:.3f}% (tol 0.5%, 18 rows)", time.perf_counter() - t, 60)


@pytest.fixture(scope="module")
def var_tables():
    t = time.perf_counter()
    out = {tid: marginal_table(tid) for tid in (3, 4)}
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def tk_tables():
    t = time.perf_counter()
    out = {tid: marginal_table(tid) for tid in (5, 6)}
    return out, time.perf_counter() - t


def test_c07_var_columns(var_tables):
    tables, seconds = var_tables
    bad, sandwich = [], True
    for tid, rows in tables.items():
        for r, ref in zip(rows, V_VAR[tid]):
            sandwich &= r["V_VaR"] <= r["V_ES"] + 1e-6
            if not rel(r["V_VaR"], ref) <= 0.02:
                bad.append(f"T{tid} {r['family']} n={r['n']}: {r['V_VaR']:.4f} vs {ref} ({100 * (r['V_VaR'] / ref - 1):+.1f}%)")
    detail = f"sandwich {'holds' if sandwich else 'VIOLATED'}; " + ("all 18 rows within 2%" if not bad else "; ".join(bad))
    record(7, sandwich and not bad, detail, seconds, 1800)


def test_c08_tk_gap(tk_tables):
    tables, seconds = tk_tables
    gaps, bad = [], []
    for tid, rows in tables.items():
        for r, ref in zip(rows, V_HSTAR[tid]):
            gaps.append(r["delta_V_rel_pct"])
            if not rel(r["V_h*"], ref) <= 5e-3:
                bad.append(f"T{tid} {r['family']} n={r['n']}: V_h*={r['V_h*']:.4f} vs {ref}")
    in_band = all(5.0 <= g <= 30.0 for g in gaps)
    detail = f"gap range [{min(gaps):.1f}%, {max(gaps):.1f}%] {'in' if in_band else 'OUTSIDE'} [5, 30]; "
    detail += "V_h* all within 0.5%" if not bad else "; ".join(bad)
    record(8, in_band and not bad, detail, seconds, 1800)


def _random_h(rng):
    h = random_distortion(rng)
    if rng.uniform() < 0.3:  # add a jump so h and its usc modification differ
        h = combine(h, make_var(float(rng.uniform(0.1, 0.9))), op="sum")
    return h


def test_c09_identity_suite():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    ident = 0.0
    for _ in range(200):
        lhs, rhs = concentration_identity(_random_h(rng), random_discrete(rng))
        ident = max(ident, abs(lhs - rhs))
    sup_err, guard = 0.0, True
    for _ in range(50):
        h = _random_h(rng)
        env = concave_envelope(h)
        models = list(close_within([random_discrete(rng) for _ in range(3)], env.reflected))
        s_star = sup_over_set(env.envelope, models)[0]
        sup_err = max(sup_err, abs(sup_over_set(usc_modification(h), models)[0] - s_star))
        guard &= sup_over_set(h, models)[0] <= s_star + 1e-12
    ok = ident <= 1e-8 and sup_err <= 1e-8 and guard
    detail = f"identity max err {ident:.1e} (200); sup-equivalence max err {sup_err:.1e} (50); guard {'ok' if guard else 'VIOLATED'}"
    record(9, ok, detail, time.perf_counter() - t, 120)


def _random_intervals(rng):
    cuts = np.sort(rng.uniform(0, 1, size=2 * int(rng.integers(1, 3))))
    return IntervalSet(tuple((float(a), float(b)) for a, b in cuts.reshape(-1, 2) if b - a > 1e-6))


def test_c10_concentration_invariants():
    t = time.perf_counter()
    rng = np.random.default_rng(7)
    mean_err, convex_ok, closure_ok = 0.0, 0, 0
    for _ in range(500):
        F = random_discrete(rng)
        G = concentrate_multi(F, _random_intervals(rng))
        mean_err = max(mean_err, abs(G.mean - F.mean))
        convex_ok += convex_dominated(G, F, tol=1e-10)
        p = float(rng.choice([1.5, 2.0, 3.0, 5.0]))
        closure_ok += MomentConstraint(p, F.mean, F.central_norm(p)).contains(G, tol=1e-10)
    ok = mean_err <= 1e-10 and convex_ok == 500 and closure_ok == 500
    detail = f"mean max err {mean_err:.1e}; stop-loss {convex_ok}/500; M^p closure {closure_ok}/500"
    record(10, ok, detail, time.perf_counter() - t, 60)


def test_c11_extremal_loop():
    t = time.perf_counter()
    rng = np.random.default_rng(11)
    member, value, done = 0.0, 0.0, 0
    while done < 50:
        h = random_distortion(rng)  # continuous, so h equals its usc modification
        mc = MomentConstraint(float(rng.choice([1.5, 2.0, 3.0])), float(rng.normal()), float(rng.uniform(0.2, 2.0)))
        res = worst_case(h, mc)
        if res.extremal is None:  # zero norm: the bound is m h(1) with no spread to realise
            continue
        F = res.extremal
        member = max(member, abs(F.mean - mc.m), max(F.central_norm(mc.p) - mc.v, 0.0))
        value = max(value, abs(rho(h, F) - res.value))
        done += 1
    mc = MomentConstraint(2, 0.0, 1.0)
    flags = (not worst_case(make_var(0.9), mc).attained) and worst_case(make_var_plus(0.9), mc).attained
    ok = member <= 1e-8 and value <= 1e-8 and flags
    detail = f"membership err {member:.1e}; value err {value:.1e}; VaR/VaR+ flags {'ok' if flags else 'WRONG'}"
    record(11, ok, detail, time.perf_counter() - t, 120)
