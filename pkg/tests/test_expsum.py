import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import fresnel

from circleforge.expsum import (
    ArcParams,
    PolySystem,
    QuadratureError,
    arc_membership,
    complete_sum,
    complete_sums_all,
    fit_rho,
    major_arc_approx_error,
    minor_arc_sup,
    oscillatory_integral,
    v_integral,
    w_integral,
    w_table,
    weyl_on_rationals,
    weyl_sum,
)
from circleforge.psi import LiProfile, build_psi_star, scaled_measure
from circleforge.sets import Ellipsephic, Explicit, Naturals, Primes, estimate_kappa, generate_set

SQ = PolySystem.monomial(2)


def _fresnel_e_t2():
    # int_0^1 e(t^2) dt = (C(2) + i S(2)) / 2 in the pi/2 convention
    S, C = fresnel(2.0)
    return complex(C / 2, S / 2)


# -- polynomial systems ---------------------------------------------------------


def test_poly_system_validation():
    phi = PolySystem.of([1, (3, 2)])
    assert phi.r == 2 and phi.K == 3 and phi.k_max == 2 and phi.coeffs == (1, 3)
    with pytest.raises(ValueError):
        PolySystem.of([2, 2])
    with pytest.raises(ValueError):
        PolySystem.of([(0, 2)])
    with pytest.raises(ValueError):
        PolySystem(())


# -- Weyl sums ------------------------------------------------------------------


def test_weyl_sum_at_zero_is_count():
    A = generate_set(Naturals(), 100)
    assert weyl_sum(A, SQ, 0) == 100


def test_weyl_sum_parity():
    A = generate_set(Naturals(), 10)
    assert abs(weyl_sum(A, SQ, Fraction(1, 2))) < 1e-12


def test_weyl_sum_primes_quarter():
    A = generate_set(Primes(), 10)
    assert weyl_sum(A, SQ, Fraction(1, 4)) == pytest.approx(1 + 3j, abs=1e-12)


def test_weyl_sum_large_phase_is_exact():
    # x^2 alpha with x ~ 1e5 would lose every digit in floating point
    A = generate_set(Naturals(), 10**5)
    a = Fraction(1, 7)
    brute = sum(np.exp(2j * math.pi * ((x * x) % 7) / 7) for x in range(1, 10**5 + 1))
    assert weyl_sum(A, SQ, a) == pytest.approx(brute, abs=1e-6)


def test_weyl_on_rationals_matches_direct():
    A = generate_set(Primes(), 300)
    fast = weyl_on_rationals(A, SQ, 12)
    for a in range(12):
        assert fast[a] == pytest.approx(weyl_sum(A, SQ, Fraction(a, 12)), abs=1e-9)


def test_weyl_sum_bound_exceeded():
    with pytest.raises(ValueError):
        weyl_sum(generate_set(Naturals(), 10), SQ, 0, X=11)


# -- complete sums --------------------------------------------------------------


def test_complete_sum_examples():
    assert complete_sum(None, SQ, 1, 0) == 1
    assert abs(complete_sum(None, SQ, 2, 1)) < 1e-15
    prof = estimate_kappa(generate_set(Ellipsephic(3, {0, 1}), 3**6), 5)
    assert complete_sum(prof, SQ, 3, 1) == pytest.approx(0.25 + 0.4330127019j, abs=1e-10)


def test_complete_sums_fft_matches_direct():
    prof = estimate_kappa(generate_set(Primes(), 2000), 12)
    phi = PolySystem.of([1, 2])
    table = complete_sums_all(prof, phi, 6)
    for b1 in range(6):
        for b2 in range(6):
            assert table[b1, b2] == pytest.approx(complete_sum(prof, phi, 6, (b1, b2)), abs=1e-12)


def test_complete_sum_gauss_sum_modulus():
    # classical quadratic Gauss sums over an odd prime have modulus sqrt(p)
    for p in [3, 5, 7, 11, 13]:
        assert abs(complete_sum(None, SQ, p, 1)) == pytest.approx(p**-0.5)


def test_complete_sum_decay_bound():
    # |S(q, a)| <= 2 q^{-1/2} for q <= 500, (a, q) = 1, k = 2
    violations = 0
    for q in range(1, 501):
        S = complete_sums_all(None, SQ, q)
        a = np.arange(q)
        units = np.gcd(a, q) == 1
        violations += int(np.sum(np.abs(S[units]) > 2 * q**-0.5 + 1e-12))
    assert violations == 0


# -- oscillatory integrals ------------------------------------------------------


def test_w_at_zero_and_full_period():
    A = generate_set(Naturals(), 1000)
    P = build_psi_star(A)
    assert w_integral(P, SQ, 0, 1000) == 1
    assert abs(w_integral(P, PolySystem.monomial(1), 1.0, 1000)) < 1e-10


def test_w_fresnel_oracle():
    P = build_psi_star(generate_set(Naturals(), 2000))
    assert w_integral(P, SQ, 1.0, 2000) == pytest.approx(_fresnel_e_t2(), abs=1e-9)


def test_v_integral_values():
    X = 400
    P = build_psi_star(generate_set(Naturals(), X))
    assert v_integral(P, SQ, 0, X) == X
    assert v_integral(P, SQ, 1.0 / X**2, X) == pytest.approx(X * _fresnel_e_t2(), rel=1e-9)
    star = build_psi_star(generate_set(Explicit({1: 1, 2: 1, 4: 1, 8: 1}), 8))
    assert v_integral(star, SQ, 0, 8) == 4


@pytest.mark.parametrize("approx,X", [(None, 600), ("li", 5000.0)])
def test_v_equals_psi_times_w(approx, X):
    P = build_psi_star(generate_set(Primes(), X)) if approx is None else LiProfile(3.0)
    beta = 3.7 / X**2
    total = float(P.evaluate(X)[0])
    assert v_integral(P, SQ, beta, X) == pytest.approx(total * w_integral(P, SQ, beta * X**2, X), abs=1e-8 * total)


def test_w_conjugate_symmetry():
    P = build_psi_star(generate_set(Primes(), 1000))
    for g in [0.3, 2.5, 17.0]:
        assert w_integral(P, SQ, -g, 1000) == pytest.approx(np.conj(w_integral(P, SQ, g, 1000)), abs=1e-12)


def test_w_decay_bound():
    # |w(gamma)| <= 2 (1 + gamma)^{-1/2} for the naturals, k = 2; the full
    # range up to 1000 runs in the acceptance suite
    m = scaled_measure(build_psi_star(generate_set(Naturals(), 4000)), 4000)
    table = w_table(m, SQ, 100.0)
    g = np.linspace(0, 100, 4001)
    assert int(np.sum(np.abs(table(g)) > 2 * (1 + g) ** -0.5)) == 0


def test_w_table_matches_direct():
    m = scaled_measure(LiProfile(3.0), 10**4)
    table = w_table(m, SQ, 50.0)
    for g in [0.0, 1.0, 12.5, 50.0]:
        assert table(np.array([g]))[0] == pytest.approx(w_integral(m, SQ, g), abs=1e-9)


def test_quadrature_cap_is_reported():
    with pytest.raises(QuadratureError):
        oscillatory_integral(np.array([0.0, 1.0]), lambda t: np.ones_like(t), [(1e7, 2)], max_panels=256)


# -- arcs -----------------------------------------------------------------------


def test_arc_examples():
    params = ArcParams(100, 5, (2,))
    pt = arc_membership(0, params)
    assert pt.major and pt.q == 1 and pt.b == (0,)
    pt = arc_membership(Fraction(1, 3) + Fraction(1, 10**6), params, "M")
    assert pt.major and pt.q == 3 and pt.b == (1,)
    assert pt.beta[0] == pytest.approx(1e-6)
    assert not arc_membership(math.sqrt(2) - 1, params).major


def test_arc_disjointness_flag():
    assert ArcParams(100, 5, (2,)).disjoint
    assert not ArcParams(10, 10, (2,)).disjoint
    with pytest.raises(ValueError):
        ArcParams(10, 0.5, (2,))


@given(st.fractions(min_value=0, max_value=Fraction(999, 1000), max_denominator=10**6), st.integers(1, 20), st.integers(0, 20))
@settings(max_examples=100, deadline=None)
def test_arc_membership_monotone_in_Q(alpha, Q, extra):
    small = arc_membership(alpha, ArcParams(200, Q, (2,)))
    big = arc_membership(alpha, ArcParams(200, Q + extra, (2,)))
    if small.major:
        assert big.major and big.q <= small.q


# -- minor arcs and the Weyl exponent ---------------------------------------------


def test_minor_arc_sup_below_trivial():
    A = generate_set(Naturals(), 500)
    res = minor_arc_sup(A, SQ, 500, 4)
    assert res.lower_bound and 0 < res.sup < 500
    P = generate_set(Primes(), 10**4)
    assert minor_arc_sup(P, SQ, 10**4, 16).sup < 1229


def test_minor_arc_sup_rejects_empty_arcs():
    with pytest.raises(ValueError):
        minor_arc_sup(generate_set(Naturals(), 10), SQ, 10, 10)


def test_fit_rho_synthetic_and_constant():
    table = [(Q, 1000.0 * Q**-0.5) for Q in [4, 8, 16, 32]]
    assert fit_rho(table, 1000.0).rho == pytest.approx(0.5, abs=1e-9)
    assert fit_rho([(Q, 7.0) for Q in [2, 3, 5]], 10.0).rho == 0
    with pytest.raises(ValueError):
        fit_rho([(4, 1.0), (4, 2.0), (4, 3.0)], 10.0)


@given(st.floats(0.05, 2.0), st.floats(1.0, 1e6))
@settings(max_examples=50, deadline=None)
def test_fit_rho_recovers_power_law(rho, A):
    table = [(Q, A * 3.0 * Q**-rho) for Q in [4, 8, 16, 32, 64]]
    assert fit_rho(table, A).rho == pytest.approx(rho, abs=1e-9)


def test_fit_rho_naturals_squares():
    A = generate_set(Naturals(), 2000)
    table = [(Q, minor_arc_sup(A, SQ, 2000, Q).sup) for Q in [4, 8, 16, 32, 64]]
    assert 0.35 <= fit_rho(table, 2000).rho <= 0.65


# -- major-arc approximation ------------------------------------------------------


def test_major_arc_error_naturals_at_zero():
    A = generate_set(Naturals(), 200)
    prof = estimate_kappa(A, 4)
    res = major_arc_approx_error(A, prof, build_psi_star(A), SQ, 0, 200, 4)
    assert res.measured == 0 and res.q == 1


def test_major_arc_error_primes_within_slack():
    X = 316
    A = generate_set(Primes(), X)
    prof = estimate_kappa(A, 3, grid=list(range(10, X + 1)))
    res = major_arc_approx_error(A, prof, LiProfile(3.0), SQ, Fraction(1, 3), X, 3)
    assert res.q == 3 and res.measured <= 10 * res.bound


def test_major_arc_error_rejects_minor_point():
    A = generate_set(Naturals(), 100)
    with pytest.raises(ValueError):
        major_arc_approx_error(A, estimate_kappa(A, 4), build_psi_star(A), SQ, math.sqrt(2) - 1, 100, 4)


# -- properties -----------------------------------------------------------------


@given(
    st.dictionaries(st.integers(1, 80), st.integers(1, 5), min_size=1, max_size=25),
    st.fractions(min_value=0, max_value=1, max_denominator=997),
)
@settings(max_examples=60, deadline=None)
def test_weyl_sum_bounded_and_conjugate(w, alpha):
    A = generate_set(Explicit(w), 80)
    f = weyl_sum(A, SQ, alpha)
    assert abs(f) <= float(A.count_up_to(80)) + 1e-9
    assert weyl_sum(A, SQ, -alpha) == pytest.approx(np.conj(f), abs=1e-9)


@given(st.integers(1, 60), st.integers(0, 59), st.integers(1, 4))
@settings(max_examples=80, deadline=None)
def test_complete_sum_bounded(q, b, k):
    assert abs(complete_sum(None, PolySystem.monomial(k), q, b % q)) <= 1 + 1e-12
