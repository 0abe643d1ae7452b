import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circleforge.expsum import PolySystem, complete_sum
from circleforge.sets import ClosedFormKappa, Ellipsephic, Naturals, Primes, estimate_kappa, generate_set
from circleforge.singular import (
    LocalFactor,
    MeanValue,
    Mixed,
    NonStabilized,
    PointMass,
    Waring,
    b_term,
    check_multiplicativity,
    dyadic_points,
    euler_product,
    gamma_count,
    integral_lower_bound,
    kernel_K,
    kernel_h,
    local_factor,
    mode_from_json,
    naturals_integral,
    schmidt_WT,
    singular_series_euler,
    tail_fit,
    truncated_integral,
    truncated_series,
    uniform_measure,
    waring_series_table,
    series_values,
    wt_gamma_side,
)

N = Naturals()
ELL = Ellipsephic(3, {0, 1})


def _kappa(spec, q):
    num, den = ClosedFormKappa(spec).int_table(q)
    return [Fraction(int(v), den) for v in num]


def _brute_gamma(spec, k, mode, q):
    """Weighted congruence count by enumeration over (Z/q)^(2s or s+u)."""
    kap = _kappa(spec, q)
    if isinstance(mode, MeanValue):
        tot = Fraction(0)
        for xs in itertools.product(range(q), repeat=2 * mode.s):
            lhs = sum(pow(x, k, q) for x in xs[: mode.s]) - sum(pow(y, k, q) for y in xs[mode.s :])
            if lhs % q == 0:
                w = Fraction(1)
                for x in xs:
                    w *= kap[x]
                tot += w
        return tot
    u = mode.u if isinstance(mode, Mixed) else 0
    tot = Fraction(0)
    for xs in itertools.product(range(q), repeat=mode.s + u):
        if (sum(pow(x, k, q) for x in xs) - mode.n) % q == 0:
            w = Fraction(1)
            for x in xs[: mode.s]:
                w *= kap[x]
            tot += w * Fraction(1, q**u)
    return tot


def _direct_series(profile, k, s, n, Q):
    """Independent float double loop over q and reduced b."""
    phi = PolySystem.monomial(k)
    tot = 0j
    for q in range(1, Q + 1):
        for b in range(q):
            if math.gcd(b, q) == 1:
                tot += complete_sum(profile, phi, q, b) ** s * np.exp(-2j * np.pi * b * n / q)
    return tot


# -- modes ----------------------------------------------------------------------


def test_mode_json_round_trip():
    for m in [MeanValue(3), Waring(4, 7), Mixed(2, 3, 11)]:
        assert mode_from_json(m.to_json()) == m


# -- Gamma and B ----------------------------------------------------------------


def test_gamma_examples():
    g = gamma_count(N, 2, Waring(2, 1), 4)
    assert g.value * 4 == 2 and g.trace == 2
    assert gamma_count(N, 2, Waring(3, 5), 1).value == 1
    assert gamma_count(ELL, 2, MeanValue(1), 3).value == Fraction(1, 2)


@pytest.mark.parametrize("spec", [N, Primes(), ELL], ids=["N", "P", "E"])
@pytest.mark.parametrize("mode", [MeanValue(1), MeanValue(2), Waring(2, 1), Waring(3, 5), Mixed(1, 1, 3)], ids=str)
@pytest.mark.parametrize("q", [2, 3, 4, 6, 9])
def test_gamma_matches_enumeration(spec, mode, q):
    assert gamma_count(spec, 2, mode, q).value == _brute_gamma(spec, 2, mode, q)


def test_b_examples():
    assert b_term(N, 2, Waring(2, 1), 2) == 0
    assert b_term(N, 2, MeanValue(2), 1) == 1


def test_b_terms_sum_to_trace_over_divisors():
    # q^r Gamma(q) = sum_{d | q} B(d)
    for q in [4, 6, 12, 18]:
        for mode in [MeanValue(2), Waring(4, 3)]:
            total = sum(b_term(N, 2, mode, d) for d in range(1, q + 1) if q % d == 0)
            assert total == gamma_count(N, 2, mode, q).trace


def test_series_examples():
    assert truncated_series(N, 2, MeanValue(2), 1).value == 1


def test_primes_waring_series_matches_direct_loop():
    prof = estimate_kappa(generate_set(Primes(), 10**4), 50)
    rep = truncated_series(prof, 2, Waring(5, 11), 50)
    direct = _direct_series(prof, 2, 5, 11, 50)
    assert float(rep.value) == pytest.approx(direct.real, abs=1e-9)
    assert abs(direct.imag) < 1e-9
    assert float(rep.value) == pytest.approx(2.1303, abs=1e-4)


def test_series_report_properties():
    rep = truncated_series(N, 2, MeanValue(2), 64)
    assert all(t >= 0 for _, t in rep.per_q)
    assert rep.value >= 1
    assert rep.partial(64) == rep.value
    assert [Q for Q, _ in rep.dyadic] == [1, 2, 4, 8, 16, 32]
    assert rep.per_q_csv().startswith("q,term\n1,1.0\n")
    assert rep.to_json()["valueFloat"] == float(rep.value)


def test_series_needs_profiled_level():
    prof = estimate_kappa(generate_set(Primes(), 1000), 10)
    with pytest.raises(KeyError):
        truncated_series(prof, 2, MeanValue(1), 11)


def test_waring_series_table_matches_series():
    table = waring_series_table(N, 2, 4, 30)
    vals = series_values(table, [1, 2, 7, 30])
    for n, v in zip([1, 2, 7, 30], vals):
        assert v == pytest.approx(float(truncated_series(N, 2, Waring(4, n), 30).value), abs=1e-12)


# -- local factors and Euler products -------------------------------------------------


def test_local_factor_odd_prime_constant_from_one():
    lf = local_factor(N, 2, Waring(4, 1), 3, hMax=3)
    assert lf.stabilized and lf.stable_from <= 1
    assert lf.trace[1:] == [Fraction(8, 9)] * 3
    assert lf.trace == lf.partial


def test_local_factor_two_adic():
    lf = local_factor(N, 2, Waring(4, 1), 2, hMax=5)
    assert lf.stabilized and lf.stable_from <= 3


def test_local_factor_depth_zero():
    lf = local_factor(N, 2, Waring(4, 1), 5, hMax=0)
    assert lf.value == 1 and lf.stabilized


def test_local_factor_divisible_n_stabilises_later():
    # 3 | n: B(9; n) = c_9(n)/81 is nonzero, so the trace moves again at h = 2
    lf = local_factor(N, 2, Waring(4, 3), 3, hMax=4)
    assert lf.trace[1] != lf.trace[2] and lf.stabilized


def test_euler_product_trivial_and_obstruction():
    assert euler_product({2: Fraction(1), 3: Fraction(1), 5: Fraction(1)}).value == 1
    res = euler_product({2: Fraction(0), 3: Fraction(8, 9)})
    assert res.value == 0 and res.obstruction == [2]
    bad = LocalFactor(3, [Fraction(1), Fraction(2)], [Fraction(1), Fraction(2)], Fraction(2), False, None)
    with pytest.raises(NonStabilized):
        euler_product({3: bad})


def test_euler_product_brackets_series():
    euler, facs = singular_series_euler(N, 2, Waring(4, 1), 23)
    series = float(truncated_series(N, 2, Waring(4, 1), 120).value)
    assert all(f.stabilized for f in facs.values())
    assert euler.lower <= series <= euler.upper
    assert euler.value == pytest.approx(series, rel=0.02)


def test_mod_four_obstruction():
    # three squares never sum to 7 mod 8
    euler, _ = singular_series_euler(N, 2, Waring(3, 7), 5)
    assert euler.value == 0 and euler.obstruction == [2]


# -- multiplicativity -------------------------------------------------------------


@pytest.mark.parametrize("spec", [N, Primes()], ids=["N", "P"])
def test_multiplicativity_small_pairs(spec):
    recs = check_multiplicativity(spec, 2, [(2, 3), (1, 5), (3, 5), (4, 5)])
    assert all(r.s_identity and r.b_identity for r in recs)
    assert recs[2].checked == 15


def test_multiplicativity_waring_mode():
    recs = check_multiplicativity(N, 2, [(3, 4), (5, 7)], Waring(4, 2))
    assert all(r.b_identity for r in recs)


def test_multiplicativity_rejects_non_coprime():
    with pytest.raises(ValueError):
        check_multiplicativity(N, 2, [(2, 4)])


# -- tail fits ----------------------------------------------------------------------


def test_tail_fit_cases():
    assert tail_fit([(Q, 1.0 / Q) for Q in [2, 4, 8, 16]]).delta == pytest.approx(1.0, abs=1e-12)
    flat = tail_fit([(Q, 0.3) for Q in [2, 4, 8]])
    assert flat.delta == 0 and not flat.converged
    assert tail_fit([(2, 0.1), (4, 0.0), (8, 0.0)]).exact_at == 4
    with pytest.raises(ValueError):
        tail_fit([(2, 1.0), (4, 0.5)])
    assert dyadic_points(200, 25) == [25, 50, 100, 200]


@given(st.floats(0.05, 3.0), st.floats(1e-6, 10.0))
@settings(max_examples=50, deadline=None)
def test_tail_fit_recovers_power_law(delta, C):
    assert tail_fit([(Q, C * Q**-delta) for Q in [25, 50, 100, 200]]).delta == pytest.approx(delta, abs=1e-9)


# -- singular integrals ---------------------------------------------------------------


def test_naturals_closed_form():
    assert naturals_integral(2, 4) == pytest.approx(math.pi**2 / 16)


def test_integral_waring_small_Q():
    rep = truncated_integral(uniform_measure(), 2, Waring(4), 25)
    assert rep.value == pytest.approx(naturals_integral(2, 4), rel=1e-3)


def test_integral_k1_simplex_slice():
    rep = truncated_integral(uniform_measure(), 1, Waring(2, 1), 50)
    assert rep.value == pytest.approx(1.0, abs=5e-3)


def test_integral_mean_value_trace():
    rep = truncated_integral(uniform_measure(), 2, MeanValue(4), 50)
    diffs = [d for _, d in rep.dyadic]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert rep.tail.delta > 0.2
    assert rep.value >= integral_lower_bound(2, 4)


def test_integral_piecewise_star_matches_uniform():
    from circleforge.psi import build_psi_star

    star = build_psi_star(generate_set(N, 2000))
    a = truncated_integral(star, 2, MeanValue(3), 20).value
    b = truncated_integral(uniform_measure(), 2, MeanValue(3), 20).value
    assert a == pytest.approx(b, abs=1e-8)


def test_integral_two_term_system():
    rep = truncated_integral(uniform_measure(), PolySystem.of([1, 2]), MeanValue(2), 6)
    assert rep.value >= integral_lower_bound(PolySystem.of([1, 2]), 2)
    with pytest.raises(ValueError):
        truncated_integral(uniform_measure(), PolySystem.of([1, 2]), Waring(2, 1), 6)


def test_lower_bound_constant():
    assert integral_lower_bound(2, 1) == pytest.approx(1 / (4 * math.pi) / 4)


# -- Schmidt's W_T ----------------------------------------------------------------------


def test_kernels():
    assert kernel_h(4.0, np.array([0.0, 0.125, 0.3])).tolist() == [4.0, 2.0, 0.0]
    assert kernel_K(4.0, np.array([0.0, 4.0])).tolist() == pytest.approx([1.0, 0.0], abs=1e-15)


def test_wt_linear_closed_form():
    for T in [2.0, 10.0]:
        (res,) = schmidt_WT(uniform_measure(), 1, 1, [T], samples=1 << 15)
        assert abs(res.value - (1 - 1 / (3 * T))) <= 3 * res.standard_error + 1e-12


def test_wt_point_mass():
    res = schmidt_WT(PointMass(0.5), 2, 2, [3.0, 7.0], samples=1 << 10)
    assert [r.value for r in res] == pytest.approx([3.0, 7.0], rel=1e-12)


def test_wt_gamma_side_agrees():
    T = 4.0
    (mc,) = schmidt_WT(uniform_measure(), 2, 2, [T], samples=1 << 16)
    det = wt_gamma_side(uniform_measure(), 2, 2, T, 60.0)
    assert abs(mc.value - det) <= 4 * mc.standard_error + 2e-3


def test_wt_is_deterministic():
    a = schmidt_WT(uniform_measure(), 2, 2, [4.0, 8.0], samples=1 << 12, seed=5)
    b = schmidt_WT(uniform_measure(), 2, 2, [4.0, 8.0], samples=1 << 12, seed=5)
    assert [r.value for r in a] == [r.value for r in b]


def test_wt_rejects_small_T():
    with pytest.raises(ValueError):
        schmidt_WT(uniform_measure(), 2, 2, [0.5])


# -- properties ---------------------------------------------------------------------------


@given(st.integers(1, 12), st.integers(1, 3), st.integers(0, 30))
@settings(max_examples=40, deadline=None)
def test_gamma_paths_and_enumeration_agree(q, s, n):
    mode = Waring(s, n)
    assert gamma_count(N, 2, mode, q).value == _brute_gamma(N, 2, mode, q)


@given(st.integers(1, 40), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_mean_value_terms_nonnegative(q, s):
    assert b_term(ELL, 2, MeanValue(s), q) >= 0
