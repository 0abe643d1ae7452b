from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circleforge.sets import (
    ClosedFormKappa,
    DistributionProfile,
    Ellipsephic,
    Explicit,
    FromFile,
    Naturals,
    Primes,
    SetFileError,
    Smooth,
    WeightedSet,
    check_additivity,
    check_condition_C,
    check_convexity,
    digit_gcd,
    ellipsephic_numbers,
    estimate_kappa,
    generate_set,
    log_density,
    read_set_file,
    smooth_numbers,
    spec_from_dict,
    spec_to_dict,
    verify_sidon,
    write_set_file,
)


def _digits_ok(n, p, digits):
    while n:
        if n % p not in digits:
            return False
        n //= p
    return True


def _is_prime(n):
    return n > 1 and all(n % d for d in range(2, int(n**0.5) + 1))


# -- generation ---------------------------------------------------------------


def test_primes_up_to_ten():
    A = generate_set(Primes(), 10)
    assert list(A.support) == [2, 3, 5, 7]
    assert A.is_unit


def test_ellipsephic_small():
    A = generate_set(Ellipsephic(3, {0, 1}), 10)
    assert list(A.support) == [1, 3, 4, 9, 10]
    assert A.count_up_to(9) == 4
    assert A.residue_count(3, 2) == 0


def test_primes_in_progression():
    A = generate_set(Primes(), 100)
    assert A.residue_count(3, 1) == 11


@pytest.mark.parametrize("p,digits,X", [(3, {0, 1}, 500), (5, {0, 1, 3}, 2000), (7, {0, 2, 5}, 3000)])
def test_ellipsephic_matches_brute_force(p, digits, X):
    got = list(ellipsephic_numbers(p, digits, X))
    want = [n for n in range(1, X + 1) if _digits_ok(n, p, digits)]
    assert got == want


def test_smooth_matches_brute_force():
    got = list(smooth_numbers(5, 200))
    want = [n for n in range(1, 201) if all(not _is_prime(d) or d < 5 for d in range(2, n + 1) if n % d == 0)]
    assert got == want


def test_generate_errors():
    with pytest.raises(ValueError):
        generate_set(Naturals(), 1)
    with pytest.raises(ValueError):
        generate_set(Ellipsephic(4, {0, 1}), 10)
    with pytest.raises(ValueError):
        generate_set(Ellipsephic(3, set()), 10)
    with pytest.raises(ValueError):
        generate_set(Ellipsephic(3, {0, 3}), 10)


def test_explicit_weights_are_rational():
    A = generate_set(Explicit({2: Fraction(1, 2), 5: 3}), 10)
    assert A.weight(2) == Fraction(1, 2)
    assert A.weight(5) == 3
    assert A.weight(3) == 0
    assert A.count_up_to(10) == Fraction(7, 2)


def test_spec_round_trip():
    for spec in [Naturals(), Primes(), Ellipsephic(5, {0, 1, 3}), Smooth(7), Explicit({3: Fraction(2, 3)})]:
        assert spec_from_dict(spec_to_dict(spec)) == spec


# -- file format --------------------------------------------------------------


def test_set_file_round_trip(tmp_path):
    A = generate_set(Explicit({1: Fraction(1, 3), 4: 2, 9: Fraction(5, 7)}), 9)
    path = tmp_path / "a.tsv"
    write_set_file(A, path)
    assert read_set_file(path) == A.weights
    B = generate_set(FromFile(str(path)), 9)
    assert B.weights == A.weights


def test_set_file_error_carries_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("# header\n1\t1\n2\tnot-a-number\n")
    with pytest.raises(SetFileError, match=r"bad.tsv:3:"):
        read_set_file(path)


# -- distribution profiles ----------------------------------------------------


@pytest.mark.parametrize(
    "spec,X",
    [(Naturals(), 2000), (Primes(), 5000), (Ellipsephic(5, {0, 1, 3}), 5**6), (Ellipsephic(3, {0, 1}), 3**7)],
)
def test_kappa_sums_to_one(spec, X):
    prof = estimate_kappa(generate_set(spec, X), 30)
    for q in prof.moduli:
        assert sum(prof.table(q)) == 1


def test_ellipsephic_profile_exact():
    A = generate_set(Ellipsephic(5, {0, 1, 3}), 5**7)
    prof = estimate_kappa(A, 10)
    assert prof.mode == "exact"
    assert prof.table(5) == tuple(Fraction(1, 3) if b in (0, 1, 3) else 0 for b in range(5))
    assert prof.error_bound[5] == 0
    # discrepancies at moduli coprime to 5 are small relative to the count
    assert max(prof.error_bound.values()) <= A.count_up_to(5**7) / 50


def test_primes_profile_closed_form():
    prof = estimate_kappa(generate_set(Primes(), 10**4), 12)
    assert prof.mode == "exact"
    assert prof.get(3, 1) == Fraction(1, 2)
    assert prof.get(4, 2) == 0
    assert prof.get(10, 3) == Fraction(1, 4)


def test_digit_gcd_guard():
    # every element with digits {0, 2} in base 5 is even, so kappa(2, 1) must be 0
    prof = estimate_kappa(generate_set(Ellipsephic(5, {0, 2}), 5**6), 4)
    assert digit_gcd({0, 2}) == 2
    assert prof.mode == "empirical"
    assert prof.get(2, 1) == 0


def test_profile_json_round_trip():
    prof = estimate_kappa(generate_set(Primes(), 3000), 8)
    back = DistributionProfile.from_json(prof.to_json())
    for q in prof.moduli:
        assert back.table(q) == prof.table(q)


def test_unprofiled_modulus():
    prof = estimate_kappa(generate_set(Naturals(), 100), 5)
    with pytest.raises(KeyError):
        prof.table(6)


def test_closed_form_source_matches_profile():
    prof = estimate_kappa(generate_set(Ellipsephic(3, {0, 1}), 3**6), 20)
    src = ClosedFormKappa(Ellipsephic(3, {0, 1}))
    for q in prof.moduli:
        num, den = src.int_table(q)
        assert tuple(Fraction(int(v), den) for v in num) == prof.table(q)


@pytest.mark.parametrize("spec", [Naturals(), Primes(), Ellipsephic(3, {0, 1})])
def test_condition_C_and_additivity(spec):
    prof = estimate_kappa(generate_set(spec, 3**7), 30)
    rep = check_condition_C(prof, [(2, 3), (3, 5), (4, 5), (5, 6), (3, 10)])
    assert rep.holds and rep.checked > 0
    assert check_additivity(prof) == []


def test_condition_C_rejects_non_coprime():
    prof = estimate_kappa(generate_set(Naturals(), 100), 12)
    with pytest.raises(ValueError):
        check_condition_C(prof, [(2, 4)])


# -- Sidon, density, convexity ------------------------------------------------


def test_sidon_witness():
    res = verify_sidon({0, 1, 2}, 2, 7)
    assert not res.holds
    assert res.witness == 2 and res.witness_count == 3


def test_sidon_holds_for_small_digit_sets():
    assert verify_sidon({0, 1, 3}, 2, 5).holds


def test_log_density_of_primes():
    A = generate_set(Primes(), 10**6)
    ld = log_density(A, [10**5, 10**6])
    assert ld.value == pytest.approx(0.796, abs=1e-3)


def test_convexity():
    assert check_convexity(generate_set(Explicit({1: 1, 2: 1, 4: 1, 8: 1}), 8)).holds
    res = check_convexity(generate_set(Explicit({1: 1, 5: 1, 6: 1}), 8))
    assert not res.holds and res.first_violation is not None


# -- properties ---------------------------------------------------------------


weights = st.dictionaries(
    st.integers(1, 60), st.fractions(min_value=Fraction(1, 12), max_value=5, max_denominator=12), min_size=1, max_size=20
)


@given(weights, st.integers(1, 12))
@settings(max_examples=60, deadline=None)
def test_residue_counts_partition_total(w, q):
    A = WeightedSet.from_weights(60, w)
    assert sum(A.residue_count(q, b) for b in range(q)) == A.count_up_to(60)


@given(weights, st.integers(1, 60))
@settings(max_examples=60, deadline=None)
def test_count_is_monotone_and_exact(w, X):
    A = WeightedSet.from_weights(60, w)
    assert A.count_up_to(X) == sum(v for n, v in w.items() if n <= X)
    assert A.count_up_to(X) <= A.count_up_to(60)


@given(st.integers(2, 7).filter(_is_prime), st.sets(st.integers(0, 6), min_size=1, max_size=4), st.integers(2, 400))
@settings(max_examples=40, deadline=None)
def test_ellipsephic_property(p, digits, X):
    digits = {d for d in digits if d < p} or {0}
    if digits == {0}:
        digits = {0, 1}
    got = set(int(v) for v in ellipsephic_numbers(p, digits, X))
    assert got == {n for n in range(1, X + 1) if _digits_ok(n, p, digits)}
