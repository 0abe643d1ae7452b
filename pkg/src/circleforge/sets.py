"""Weighted thin sets: generators, counting functions and structural checks.

Weights are exact rationals throughout.  Internally a set stores its sorted
support together with integer numerators over one common denominator, which
keeps every congruence count an exact integer computation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .arith import INT64_SAFE, divisors, factorize, is_prime, prime_sieve, totient


class SetFileError(ValueError):
    """Malformed set file; the message carries the offending line number."""


# ----------------------------------------------------------------------------
# set specifications
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Naturals:
    pass


@dataclass(frozen=True)
class Primes:
    pass


@dataclass(frozen=True)
class Ellipsephic:
    p: int
    digits: frozenset[int]

    def __init__(self, p: int, digits: Iterable[int]):
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "digits", frozenset(int(d) for d in digits))

    @property
    def r(self) -> int:
        return len(self.digits)


@dataclass(frozen=True)
class Smooth:
    Q: int


@dataclass(frozen=True)
class Explicit:
    pairs: tuple[tuple[int, Fraction], ...]

    def __init__(self, pairs: Union[Mapping[int, object], Iterable[tuple[int, object]]]):
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        object.__setattr__(
            self, "pairs", tuple(sorted((int(n), Fraction(w)) for n, w in items))
        )


@dataclass(frozen=True)
class FromFile:
    path: str


SetSpec = Union[Naturals, Primes, Ellipsephic, Smooth, Explicit, FromFile]


def spec_to_dict(spec: SetSpec) -> dict:
    if isinstance(spec, Naturals):
        return {"kind": "naturals"}
    if isinstance(spec, Primes):
        return {"kind": "primes"}
    if isinstance(spec, Ellipsephic):
        return {"kind": "ellipsephic", "p": spec.p, "digits": sorted(spec.digits)}
    if isinstance(spec, Smooth):
        return {"kind": "smooth", "Q": spec.Q}
    if isinstance(spec, Explicit):
        return {"kind": "explicit", "pairs": [[n, str(w)] for n, w in spec.pairs]}
    if isinstance(spec, FromFile):
        return {"kind": "file", "path": spec.path}
    raise TypeError(f"unknown set spec {spec!r}")


def spec_from_dict(d: Mapping) -> SetSpec:
    kind = d["kind"]
    if kind == "naturals":
        return Naturals()
    if kind == "primes":
        return Primes()
    if kind == "ellipsephic":
        return Ellipsephic(d["p"], d["digits"])
    if kind == "smooth":
        return Smooth(int(d["Q"]))
    if kind == "explicit":
        return Explicit([(int(n), Fraction(w)) for n, w in d["pairs"]])
    if kind == "file":
        return FromFile(str(d["path"]))
    raise ValueError(f"unknown set kind {kind!r}")


# ----------------------------------------------------------------------------
# the weighted set
# ----------------------------------------------------------------------------


def _as_int_array(values: Sequence[int]) -> np.ndarray:
    values = [int(v) for v in values]
    if values and max(abs(v) for v in values) * len(values) >= INT64_SAFE:
        return np.array(values, dtype=object)
    return np.array(values, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class WeightedSet:
    """Finite prefix ``(a_n)_{n <= bound}`` of a weighted sequence.

    ``support`` is sorted and strictly positive; ``numer[i] / denom`` is the
    weight of ``support[i]``.  All stored weights are strictly positive.
    """

    bound: int
    support: np.ndarray
    numer: np.ndarray
    denom: int = 1
    label: str = ""
    origin: SetSpec | None = None
    _prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.bound < 1:
            raise ValueError("bound must be positive")
        if len(self.support) != len(self.numer):
            raise ValueError("support and weights differ in length")
        if len(self.support):
            if self.support[0] < 1 or self.support[-1] > self.bound:
                raise ValueError("support must lie in [1, bound]")
            if np.any(np.diff(self.support) <= 0):
                raise ValueError("support must be strictly increasing")
            if any(v <= 0 for v in self.numer):
                raise ValueError("stored weights must be strictly positive")
        prefix = np.concatenate([np.zeros(1, dtype=self.numer.dtype), np.cumsum(self.numer)])
        object.__setattr__(self, "_prefix", prefix)

    @classmethod
    def from_weights(
        cls,
        bound: int,
        weights: Mapping[int, object],
        label: str = "",
        origin: SetSpec | None = None,
    ) -> "WeightedSet":
        items = []
        for n, w in weights.items():
            w = Fraction(w)
            if w < 0:
                raise ValueError(f"negative weight at n={n}")
            if w > 0:
                items.append((int(n), w))
        items.sort()
        den = 1
        for _, w in items:
            den = den * w.denominator // math.gcd(den, w.denominator)
        support = np.array([n for n, _ in items], dtype=np.int64)
        numer = _as_int_array([w.numerator * (den // w.denominator) for _, w in items])
        return cls(bound, support, numer, den, label, origin)

    @classmethod
    def unit(cls, bound: int, support: Iterable[int], label: str = "", origin=None) -> "WeightedSet":
        support = np.unique(np.asarray(list(support), dtype=np.int64))
        return cls(bound, support, np.ones(len(support), dtype=np.int64), 1, label, origin)

    # -- views ---------------------------------------------------------------

    @property
    def weights(self) -> dict[int, Fraction]:
        return {int(n): Fraction(int(a), self.denom) for n, a in zip(self.support, self.numer)}

    @property
    def is_unit(self) -> bool:
        return self.denom == 1 and all(v == 1 for v in self.numer)

    def __len__(self) -> int:
        return len(self.support)

    def weight(self, n: int) -> Fraction:
        i = np.searchsorted(self.support, n)
        if i < len(self.support) and self.support[i] == n:
            return Fraction(int(self.numer[i]), self.denom)
        return Fraction(0)

    def truncate(self, X: int) -> "WeightedSet":
        X = int(X)
        i = int(np.searchsorted(self.support, X, side="right"))
        return WeightedSet(
            min(X, self.bound), self.support[:i], self.numer[:i], self.denom, self.label, self.origin
        )

    def scaled(self, c) -> "WeightedSet":
        c = Fraction(c)
        if c <= 0:
            raise ValueError("scale must be positive")
        numer = _as_int_array([int(v) * c.numerator for v in self.numer])
        return WeightedSet(self.bound, self.support, numer, self.denom * c.denominator, self.label, self.origin)

    # -- counting ------------------------------------------------------------

    def _check_X(self, X) -> int:
        if X > self.bound:
            raise ValueError(f"X={X} exceeds materialised bound {self.bound}")
        return int(math.floor(X))

    def count_numer(self, X) -> int:
        """Numerator of A(X) over ``denom``."""
        X = self._check_X(X)
        i = int(np.searchsorted(self.support, X, side="right"))
        return int(self._prefix[i])

    def count_up_to(self, X) -> Fraction:
        return Fraction(self.count_numer(X), self.denom)

    def residue_numer(self, q: int, X=None) -> np.ndarray:
        """Integer numerators of A(q, b; X) for every b mod q."""
        X = self.bound if X is None else self._check_X(X)
        i = int(np.searchsorted(self.support, X, side="right"))
        out = np.zeros(q, dtype=self.numer.dtype)
        np.add.at(out, self.support[:i] % q, self.numer[:i])
        return out

    def residue_count(self, q: int, b: int, X=None) -> Fraction:
        if q < 1:
            raise ValueError("modulus must be positive")
        if not 0 <= b < q:
            raise ValueError(f"residue b={b} out of range for q={q}")
        return Fraction(int(self.residue_numer(q, X)[b]), self.denom)

    def max_weight(self) -> Fraction:
        if not len(self):
            return Fraction(0)
        return Fraction(int(max(self.numer)), self.denom)

    def sum_sq_weights(self) -> Fraction:
        return Fraction(sum(int(v) ** 2 for v in self.numer), self.denom**2)


def count_up_to(A: WeightedSet, X) -> Fraction:
    return A.count_up_to(X)


def residue_count(A: WeightedSet, q: int, b: int, X=None) -> Fraction:
    return A.residue_count(q, b, X)


# ----------------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------------


def ellipsephic_numbers(p: int, digits: Iterable[int], X: int) -> np.ndarray:
    """Positive integers <= X whose base-p digits all lie in ``digits``."""
    digits = sorted(set(digits))
    if not digits:
        return np.array([], dtype=np.int64)
    # numbers with exactly h digits (leading digit nonzero), built level by level
    nonzero = [d for d in digits if d]
    out: list[int] = []
    level = [d for d in nonzero if d <= X]
    power = 1
    while level:
        out.extend(level)
        power *= p
        if power > X:
            break
        nxt = [n * p + d for n in level for d in digits]
        level = [n for n in nxt if n <= X]
    return np.array(sorted(out), dtype=np.int64)


def smooth_numbers(Q: int, X: int) -> np.ndarray:
    """Integers in [1, X] all of whose prime factors are < Q."""
    rest = np.arange(1, X + 1, dtype=np.int64)
    for p in prime_sieve(Q - 1):
        p = int(p)
        mask = rest % p == 0
        while mask.any():
            rest[mask] //= p
            mask = rest % p == 0
    return np.flatnonzero(rest == 1).astype(np.int64) + 1


def generate_set(spec: SetSpec, X: int) -> WeightedSet:
    """Materialise the weighted set described by ``spec`` up to ``X``."""
    X = int(X)
    if X < 2:
        raise ValueError("X must be at least 2")
    if isinstance(spec, Naturals):
        return WeightedSet.unit(X, range(1, X + 1), "naturals", spec)
    if isinstance(spec, Primes):
        return WeightedSet.unit(X, prime_sieve(X), "primes", spec)
    if isinstance(spec, Ellipsephic):
        if not is_prime(spec.p):
            raise ValueError(f"p={spec.p} is not prime")
        if not spec.digits:
            raise ValueError("digit set must be nonempty")
        bad = [d for d in spec.digits if not 0 <= d < spec.p]
        if bad:
            raise ValueError(f"invalid digit residue(s) {bad} for p={spec.p}")
        label = f"ellipsephic(p={spec.p}, D={sorted(spec.digits)})"
        return WeightedSet.unit(X, ellipsephic_numbers(spec.p, spec.digits, X), label, spec)
    if isinstance(spec, Smooth):
        if spec.Q < 2:
            raise ValueError("smoothness bound must be >= 2")
        return WeightedSet.unit(X, smooth_numbers(spec.Q, X), f"smooth(Q={spec.Q})", spec)
    if isinstance(spec, Explicit):
        weights = {n: w for n, w in spec.pairs if n <= X}
        if any(n < 1 for n in weights):
            raise ValueError("explicit support must be positive")
        return WeightedSet.from_weights(X, weights, "explicit", spec)
    if isinstance(spec, FromFile):
        weights = read_set_file(spec.path)
        return WeightedSet.from_weights(X, {n: w for n, w in weights.items() if n <= X}, Path(spec.path).name, spec)
    raise TypeError(f"unknown set spec {spec!r}")


# ----------------------------------------------------------------------------
# set file format
# ----------------------------------------------------------------------------


def read_set_file(path) -> dict[int, Fraction]:
    """Parse ``n<TAB>num/den`` records; ``#`` lines are comments."""
    weights: dict[int, Fraction] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) > 2:
                raise SetFileError(f"{path}:{lineno}: expected 'n<TAB>weight', got {raw!r}")
            try:
                n = int(parts[0])
                w = Fraction(parts[1]) if len(parts) == 2 else Fraction(1)
            except (ValueError, ZeroDivisionError) as exc:
                raise SetFileError(f"{path}:{lineno}: {exc}") from None
            if n < 1:
                raise SetFileError(f"{path}:{lineno}: element {n} is not positive")
            if w < 0:
                raise SetFileError(f"{path}:{lineno}: negative weight {w}")
            if n in weights:
                raise SetFileError(f"{path}:{lineno}: duplicate element {n}")
            weights[n] = w
    return weights


def write_set_file(A: WeightedSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {A.label or 'weighted set'}; bound={A.bound}\n")
        for n, w in A.weights.items():
            if w == 1:
                fh.write(f"{n}\n")
            else:
                fh.write(f"{n}\t{w.numerator}/{w.denominator}\n")


# ----------------------------------------------------------------------------
# distribution profiles
# ----------------------------------------------------------------------------


@dataclass
class DistributionProfile:
    """Tables kappa(q, b) for q in ``moduli``, with observed error proxies."""

    moduli: list[int]
    kappa: dict[int, tuple[Fraction, ...]]
    error_bound: dict[int, Fraction]
    mode: str = "exact"
    label: str = ""

    @property
    def level(self) -> int:
        return max(self.moduli)

    def __contains__(self, q: int) -> bool:
        return q in self.kappa

    def get(self, q: int, b: int) -> Fraction:
        return self.kappa[q][b % q]

    def table(self, q: int) -> tuple[Fraction, ...]:
        if q not in self.kappa:
            raise KeyError(f"modulus q={q} is not profiled (level {self.level})")
        return self.kappa[q]

    def int_table(self, q: int) -> tuple[np.ndarray, int]:
        """kappa(q, .) as integer numerators over a common denominator."""
        tab = self.table(q)
        den = 1
        for v in tab:
            den = den * v.denominator // math.gcd(den, v.denominator)
        return _as_int_array([v.numerator * (den // v.denominator) for v in tab]), den

    def to_json(self) -> dict:
        return {
            str(q): {str(b): f"{v.numerator}/{v.denominator}" for b, v in enumerate(self.kappa[q])}
            for q in self.moduli
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False, indent=1)

    @classmethod
    def from_json(cls, data: Mapping, mode: str = "exact", label: str = "") -> "DistributionProfile":
        moduli = sorted(int(q) for q in data)
        kappa = {}
        for q in moduli:
            row = data[str(q)]
            kappa[q] = tuple(Fraction(row[str(b)]) for b in range(q))
        return cls(moduli, kappa, {q: Fraction(0) for q in moduli}, mode, label)


def naturals_profile(qmax: int) -> DistributionProfile:
    """kappa(q, b) = 1/q; the classical complete-sum normalisation."""
    moduli = list(range(1, qmax + 1))
    kappa = {q: (Fraction(1, q),) * q for q in moduli}
    return DistributionProfile(moduli, kappa, {q: Fraction(0) for q in moduli}, "exact", "naturals")


def _primes_kappa(q: int) -> tuple[Fraction, ...]:
    phi = Fraction(1, totient(q))
    return tuple(phi if math.gcd(b, q) == 1 else Fraction(0) for b in range(q))


def ellipsephic_admissible(p: int, digits: frozenset[int], q: int) -> np.ndarray:
    """Boolean mask of admissible residues mod q = q1 * p^h."""
    h = 0
    q1 = q
    while q1 % p == 0:
        q1 //= p
        h += 1
    ph = p**h
    # residues mod p^h whose h base-p digits (with leading zeros) all lie in D
    good_ph = np.zeros(ph, dtype=bool)
    for tup in product(sorted(digits), repeat=h):
        good_ph[sum(d * p**i for i, d in enumerate(tup))] = True
    c = np.arange(q)
    return good_ph[c % ph]


def _ellipsephic_kappa(p: int, digits: frozenset[int], q: int) -> tuple[Fraction, ...]:
    mask = ellipsephic_admissible(p, digits, q)
    v = Fraction(1, int(mask.sum()))
    return tuple(v if m else Fraction(0) for m in mask)


def closed_form_kappa(spec: SetSpec | None, q: int) -> tuple[Fraction, ...] | None:
    if isinstance(spec, Naturals):
        return (Fraction(1, q),) * q
    if isinstance(spec, Primes):
        return _primes_kappa(q)
    if isinstance(spec, Ellipsephic):
        return _ellipsephic_kappa(spec.p, spec.digits, q)
    return None


def snap_kappa(counts: Sequence[int], total: int, q: int) -> tuple[Fraction, ...]:
    """Rationalise observed ratios with denominators <= lcm(q, 720), then renormalise."""
    cap = q * 720 // math.gcd(q, 720)
    raw = [Fraction(int(c), total).limit_denominator(cap) for c in counts]
    s = sum(raw)
    return tuple(v / s for v in raw)


def digit_gcd(digits: Iterable[int]) -> int:
    """gcd of all pairwise differences of a digit set (0 for a single digit)."""
    digits = sorted(digits)
    g = 0
    for d in digits[1:]:
        g = math.gcd(g, d - digits[0])
    return g


def closed_form_valid(spec: SetSpec | None, q: int) -> bool:
    """Whether the closed-form kappa(q, .) is the true limiting distribution.

    For ellipsephic sets the digit sum sum d_i p^i mod q1 (q1 coprime to p) is a
    random walk whose steps are supported on a coset of g_D Z, g_D the gcd of
    digit differences; it equidistributes mod q1 exactly when gcd(q1, g_D) = 1.
    """
    if isinstance(spec, Ellipsephic):
        q1 = q
        while q1 % spec.p == 0:
            q1 //= spec.p
        return math.gcd(q1, digit_gcd(spec.digits)) == 1
    return closed_form_kappa(spec, 1) is not None


def estimate_kappa(
    A: WeightedSet,
    qmax: int,
    grid: Sequence[int] | None = None,
    *,
    allow_closed_form: bool = True,
) -> DistributionProfile:
    """Profile the residue-class distribution of ``A`` for all q <= qmax.

    Generator sets with known closed-form coefficients get ``mode='exact'``;
    otherwise the ratios at the largest grid point are rationalised
    (``mode='empirical'``).  ``error_bound[q]`` is the observed maximum of
    ``|A(q,b;X) - kappa(q,b) A(X)|`` over the grid and all residues.
    """
    if qmax < 1:
        raise ValueError("qmax must be >= 1")
    grid = [A.bound] if grid is None else [int(x) for x in grid]
    if not grid:
        raise ValueError("empty grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing")
    xmax = grid[-1]
    total = A.count_numer(xmax)
    if total == 0:
        raise ValueError("A(X_max) = 0; nothing to profile")

    moduli = list(range(1, qmax + 1))
    counts_at = {X: {q: A.residue_numer(q, X) for q in moduli} for X in grid}
    totals = {X: A.count_numer(X) for X in grid}

    mode = "empirical"
    kappa: dict[int, tuple[Fraction, ...]] = {}
    if allow_closed_form and all(closed_form_valid(A.origin, q) for q in moduli):
        kappa = {q: closed_form_kappa(A.origin, q) for q in moduli}
        mode = "exact"
    if mode == "empirical":
        kappa = {q: snap_kappa(counts_at[xmax][q], total, q) for q in moduli}

    error_bound = {}
    for q in moduli:
        worst = Fraction(0)
        for X in grid:
            tot = totals[X]
            for c, kv in zip(counts_at[X][q], kappa[q]):
                worst = max(worst, abs(int(c) - kv * tot))
        error_bound[q] = worst / A.denom
    return DistributionProfile(moduli, kappa, error_bound, mode, A.label)


class ClosedFormKappa:
    """Lazily generated closed-form kappa tables for a generator set.

    Offers the same read interface as ``DistributionProfile`` without
    materialising every modulus up front.
    """

    mode = "exact"

    def __init__(self, spec: SetSpec, level: int = 10**6, label: str = ""):
        if closed_form_kappa(spec, 1) is None:
            raise ValueError(f"no closed form for {spec!r}")
        self.spec = spec
        self.level = level
        self.label = label or spec_to_dict(spec)["kind"]
        self._cache: dict[int, tuple[Fraction, ...]] = {}

    def __contains__(self, q: int) -> bool:
        return 1 <= q <= self.level

    @property
    def moduli(self) -> range:
        return range(1, self.level + 1)

    @property
    def error_bound(self) -> dict:
        return _ZeroDict()

    def table(self, q: int) -> tuple[Fraction, ...]:
        if not 1 <= q <= self.level:
            raise KeyError(f"modulus q={q} is not profiled (level {self.level})")
        if q not in self._cache:
            if not closed_form_valid(self.spec, q):
                raise ValueError(f"closed form is not valid at q={q} for {self.spec!r}")
            self._cache[q] = closed_form_kappa(self.spec, q)
        return self._cache[q]

    def get(self, q: int, b: int) -> Fraction:
        return self.table(q)[b % q]

    def int_table(self, q: int) -> tuple[np.ndarray, int]:
        if isinstance(self.spec, Naturals):
            return np.ones(q, dtype=np.int64), q
        if isinstance(self.spec, Primes):
            units = np.gcd(np.arange(q), q) == 1
            return units.astype(np.int64), int(units.sum())
        if isinstance(self.spec, Ellipsephic):
            if not closed_form_valid(self.spec, q):
                raise ValueError(f"closed form is not valid at q={q}")
            mask = ellipsephic_admissible(self.spec.p, self.spec.digits, q)
            return mask.astype(np.int64), int(mask.sum())
        raise TypeError(self.spec)


class _ZeroDict(dict):
    def __missing__(self, key):
        return Fraction(0)


def kappa_source(spec_or_profile, level: int = 10**6):
    """Profile objects pass through; generator specs become lazy closed forms."""
    if isinstance(spec_or_profile, (DistributionProfile, ClosedFormKappa)):
        return spec_or_profile
    return ClosedFormKappa(spec_or_profile, level)


def check_additivity(profile: DistributionProfile) -> list[tuple[int, int, int]]:
    """Violations (q, q', b) of kappa(q,b) = sum_{c = b (q)} kappa(qq', c)."""
    bad = []
    for q in profile.moduli:
        for Q in profile.moduli:
            if Q % q or Q == q:
                continue
            big = profile.table(Q)
            for b in range(q):
                if profile.get(q, b) != sum(big[b::q]):
                    bad.append((q, Q // q, b))
    return bad


@dataclass
class ConditionCReport:
    holds: bool
    checked: int
    failures: list[tuple[int, int, int, int]]
    equidistributed: dict[int, bool]


def is_equidistributed_shape(row: Sequence[Fraction]) -> bool:
    nz = {v for v in row if v != 0}
    return len(nz) == 1 and next(iter(nz)) * sum(1 for v in row if v) == 1


def check_condition_C(profile: DistributionProfile, pairs: Iterable[tuple[int, int]]) -> ConditionCReport:
    """Exact check of kappa(qq', qb'+q'b) = kappa(q, q'b) kappa(q', qb')."""
    failures = []
    checked = 0
    seen = set()
    for q, qq in pairs:
        if math.gcd(q, qq) != 1:
            raise ValueError(f"pair ({q}, {qq}) is not coprime")
        for m in (q, qq, q * qq):
            profile.table(m)
        seen.update((q, qq, q * qq))
        for b in range(q):
            for bb in range(qq):
                lhs = profile.get(q * qq, q * bb + qq * b)
                rhs = profile.get(q, qq * b) * profile.get(qq, q * bb)
                checked += 1
                if lhs != rhs:
                    failures.append((q, qq, b, bb))
    shape = {m: is_equidistributed_shape(profile.table(m)) for m in sorted(seen)}
    return ConditionCReport(not failures, checked, failures, shape)


# ----------------------------------------------------------------------------
# structural predicates
# ----------------------------------------------------------------------------


@dataclass
class SidonResult:
    holds: bool
    m: int
    max_count: int
    witness: int | None
    witness_count: int | None
    beyond_range_max: int
    counts: dict[int, int]


def sum_counts(digits: Iterable[int], m: int) -> dict[int, int]:
    """Ordered m-fold representation counts of n as sums of digits (over Z)."""
    digits = sorted(set(int(d) for d in digits))
    if not digits:
        return {}
    top = max(digits)
    ind = np.zeros(top + 1, dtype=object)
    ind[digits] = 1
    poly = np.array([1], dtype=object)
    for _ in range(m):
        poly = np.convolve(poly, ind)
    return {n: int(c) for n, c in enumerate(poly) if c}


def verify_sidon(digits: Iterable[int], m: int, p: int) -> SidonResult:
    """Check the B_m property: at most m! ordered representations for n <= m p."""
    digits = set(int(d) for d in digits)
    if any(not 0 <= d < p for d in digits):
        raise ValueError("digits must lie in [0, p)")
    if m < 1:
        raise ValueError("m must be >= 1")
    counts = sum_counts(digits, m)
    cap = math.factorial(m)
    limit = m * p
    in_range = {n: c for n, c in counts.items() if n <= limit}
    beyond = max((c for n, c in counts.items() if n > limit), default=0)
    witness = next((n for n in sorted(in_range) if in_range[n] > cap), None)
    return SidonResult(
        holds=witness is None,
        m=m,
        max_count=max(in_range.values(), default=0),
        witness=witness,
        witness_count=None if witness is None else in_range[witness],
        beyond_range_max=beyond,
        counts=counts,
    )


@dataclass
class LogDensity:
    value: float
    trace: list[tuple[int, float]]
    note: str = "min over grid; finite-sample proxy for the liminf"


def log_density(A: WeightedSet, grid: Sequence[int]) -> LogDensity:
    grid = [int(x) for x in grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing with at least two points")
    trace = []
    for X in grid:
        ax = A.count_up_to(X)
        if ax <= 1:
            raise ValueError(f"A({X}) = {ax} <= 1")
        trace.append((X, math.log(ax) / math.log(X)))
    return LogDensity(min(v for _, v in trace), trace)


@dataclass
class ConvexityResult:
    holds: bool
    first_violation: int | None
    gaps: list[int]


def check_convexity(A: WeightedSet) -> ConvexityResult:
    """Non-decreasing consecutive gaps; violation index n is 1-based as x_n."""
    if len(A.support) < 3:
        raise ValueError("support needs at least three elements")
    gaps = np.diff(A.support).tolist()
    for i in range(len(gaps) - 1):
        if gaps[i] > gaps[i + 1]:
            return ConvexityResult(False, i + 1, gaps)
    return ConvexityResult(True, None, gaps)


__all__ = [
    "Naturals",
    "Primes",
    "Ellipsephic",
    "Smooth",
    "Explicit",
    "FromFile",
    "SetSpec",
    "WeightedSet",
    "DistributionProfile",
    "generate_set",
    "count_up_to",
    "residue_count",
    "estimate_kappa",
    "naturals_profile",
    "ClosedFormKappa",
    "kappa_source",
    "check_condition_C",
    "check_additivity",
    "verify_sidon",
    "log_density",
    "check_convexity",
    "read_set_file",
    "write_set_file",
    "divisors",
    "factorize",
]
