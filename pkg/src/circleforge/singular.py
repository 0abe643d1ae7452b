"""Singular series, local factors, singular integrals and the smoothed W_T.

Arithmetic factors are computed on an exact rational path wherever possible:
the weighted distribution P_s of phi(x_1)+...+phi(x_s) modulo q (weights
kappa(q, x_i)) gives Gamma(q) as a congruence count, while the reduced terms
B(q) come from the same distribution paired with generalised Ramanujan sums.
A floating path over the complete sums S(q, b) cross-checks both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .counting import convolve_dense
from .arith import divisors, factorize, prime_sieve, ramanujan_sums
from .expsum import (
    GAUSS_NODES,
    TWO_PI,
    PolySystem,
    QuadratureError,
    complete_sums_all,
    panel_nodes,
    w_table,
)
from .psi import PiecewiseStar, PsiApprox, ScaledMeasure, scaled_measure
from .sets import Naturals, kappa_source

CROSS_TOL = 1e-10
STAB_TOL = 1e-9


class CrossCheckError(ArithmeticError):
    """Two independent evaluation paths disagreed."""


class NonStabilized(RuntimeError):
    """A local factor did not stabilise within the allowed depth."""


# ----------------------------------------------------------------------------
# modes
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanValue:
    s: int

    def to_json(self) -> dict:
        return {"variant": "MeanValue", "s": self.s}


@dataclass(frozen=True)
class Waring:
    s: int
    n: int = 0

    def to_json(self) -> dict:
        return {"variant": "Waring", "s": self.s, "n": self.n}


@dataclass(frozen=True)
class Mixed:
    s: int
    u: int
    n: int = 0

    def to_json(self) -> dict:
        return {"variant": "Mixed", "s": self.s, "u": self.u, "n": self.n}


SeriesMode = Union[MeanValue, Waring, Mixed]


def mode_from_json(d: dict) -> SeriesMode:
    v = d["variant"]
    if v == "MeanValue":
        return MeanValue(int(d["s"]))
    if v == "Waring":
        return Waring(int(d["s"]), int(d.get("n", 0)))
    if v == "Mixed":
        return Mixed(int(d["s"]), int(d["u"]), int(d.get("n", 0)))
    raise ValueError(f"unknown series variant {v!r}")


def _phi(phi_or_k) -> PolySystem:
    return phi_or_k if isinstance(phi_or_k, PolySystem) else PolySystem.monomial(int(phi_or_k))


def _check_mode(phi: PolySystem, mode: SeriesMode) -> None:
    if mode.s < 1:
        raise ValueError("s must be positive")
    if not isinstance(mode, MeanValue) and phi.r != 1:
        raise ValueError("Waring and mixed variants need a single polynomial")
    if isinstance(mode, Mixed) and mode.u < 0:
        raise ValueError("u must be non-negative")


# ----------------------------------------------------------------------------
# exact residue distributions
# ----------------------------------------------------------------------------


def _fits(a: np.ndarray, b: np.ndarray, terms: int) -> bool:
    ma = max(abs(int(a.max(initial=0))), abs(int(a.min(initial=0))))
    mb = max(abs(int(b.max(initial=0))), abs(int(b.min(initial=0))))
    return ma * mb * max(terms, 1) < 2**62


def _cyclic_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact cyclic convolution of two integer arrays of shape (q,)*r."""
    dtype = np.int64 if (a.dtype != object and b.dtype != object and _fits(a, b, b.size)) else object
    if a.ndim == 1 and a.shape[0] > 256:
        q = a.shape[0]
        lin = convolve_dense(a.astype(dtype), b.astype(dtype))
        out = lin[:q].copy()
        out[: len(lin) - q] += lin[q:]
        return out
    a = a.astype(dtype)
    out = np.zeros(a.shape, dtype=dtype)
    for idx in zip(*np.nonzero(b)):
        out = out + b[idx] * np.roll(a, shift=idx, axis=tuple(range(a.ndim)))
    return out


class _Distributions:
    """Cache of exact residue distributions for one kappa source and system."""

    def __init__(self, source, phi: PolySystem):
        self.source = source
        self.phi = phi
        self._one: dict[int, tuple[np.ndarray, int]] = {}
        self._pow: dict[tuple[int, int], tuple[np.ndarray, int]] = {}
        self._unif: dict[tuple[int, int], tuple[np.ndarray, int]] = {}

    def single(self, q: int) -> tuple[np.ndarray, int]:
        """Numerators of the law of phi(x) mod q under kappa(q, .) and its denominator."""
        if q not in self._one:
            num, den = self.source.int_table(q)
            res = self.phi.residues(np.arange(q, dtype=np.int64), q)
            hist = np.zeros((q,) * self.phi.r, dtype=np.int64)
            np.add.at(hist, tuple(res), np.asarray(num, dtype=np.int64))
            self._one[q] = (hist, int(den))
        return self._one[q]

    def power(self, q: int, s: int) -> tuple[np.ndarray, int]:
        """s-fold convolution power of ``single(q)``."""
        key = (q, s)
        if key not in self._pow:
            if s == 1:
                self._pow[key] = self.single(q)
            else:
                prev, dp = self.power(q, s - 1)
                one, d1 = self.single(q)
                self._pow[key] = (_cyclic_conv(prev, one), dp * d1)
        return self._pow[key]

    def uniform(self, q: int, u: int) -> tuple[np.ndarray, int]:
        """Law of y_1^k+...+y_u^k mod q with y_i uniform (classical variables)."""
        key = (q, u)
        if key not in self._unif:
            if u == 0:
                out = np.zeros(q, dtype=np.int64)
                out[0] = 1
                self._unif[key] = (out, 1)
            else:
                prev, dp = self.uniform(q, u - 1)
                res = self.phi.residues(np.arange(q, dtype=np.int64), q)[0]
                one = np.bincount(res, minlength=q).astype(np.int64)
                self._unif[key] = (_cyclic_conv(prev, one), dp * q)
        return self._unif[key]

    def target_law(self, q: int, mode: SeriesMode) -> tuple[np.ndarray, int]:
        """Law whose value at n gives Gamma (Waring/mixed variants)."""
        P, d = self.power(q, mode.s)
        if isinstance(mode, Mixed) and mode.u:
            U, du = self.uniform(q, mode.u)
            return _cyclic_conv(P, U), d * du
        return P, d


_DIST_CACHE: dict[tuple[int, PolySystem], _Distributions] = {}


def _dists(source, phi: PolySystem) -> _Distributions:
    key = (id(source), phi)
    hit = _DIST_CACHE.get(key)
    if hit is None or hit.source is not source:
        hit = _Distributions(source, phi)
        _DIST_CACHE[key] = hit
    return hit


def _sum_sq(P: np.ndarray) -> int:
    return sum(int(v) * int(v) for v in P.ravel() if v)


def _autocorrelation(P: np.ndarray) -> np.ndarray:
    """D[v] = sum_w P[w + v] P[w] over (Z/q)^r, exact."""
    if P.ndim == 1:
        q = P.shape[0]
        a = P.astype(object)
        lin = convolve_dense(a, a[::-1].copy())  # lin[q-1+v] = sum_w P[w+v] P[w] for |v| < q
        out = np.zeros(q, dtype=object)
        out += lin[q - 1 :]
        out[1:] += lin[: q - 1]
        return out
    axes = tuple(range(P.ndim))
    out = np.zeros(P.shape, dtype=object)
    flatP = [int(v) for v in P.ravel()]
    for idx in np.ndindex(*P.shape):
        rolled = np.roll(P, shift=tuple(-i for i in idx), axis=axes).ravel()
        out[idx] = sum(int(a) * b for a, b in zip(rolled, flatP) if b)
    return out


# ----------------------------------------------------------------------------
# Gamma(q) and B(q)
# ----------------------------------------------------------------------------


def _gamma_exact(dist: _Distributions, q: int, mode: SeriesMode) -> Fraction:
    if isinstance(mode, MeanValue):
        P, d = dist.power(q, mode.s)
        return Fraction(_sum_sq(P), d * d)
    P, d = dist.target_law(q, mode)
    return Fraction(int(P[mode.n % q]), d)


def _terms_float(source, phi: PolySystem, q: int, mode: SeriesMode) -> np.ndarray:
    """term(q, b) for every b in (Z/q)^r, floating path."""
    S = complete_sums_all(source, phi, q)
    if isinstance(mode, MeanValue):
        return np.abs(S) ** (2 * mode.s)
    b = np.arange(q)
    t = S**mode.s * np.exp(-1j * TWO_PI * ((b * mode.n) % q) / q)
    if isinstance(mode, Mixed) and mode.u:
        t = t * complete_sums_all(None, phi, q) ** mode.u
    return t


def _reduced_mask(q: int, r: int) -> np.ndarray:
    g = np.full((q,) * r, q, dtype=np.int64)
    for ax in range(r):
        shape = [1] * r
        shape[ax] = q
        g = np.gcd(g, np.arange(q).reshape(shape))
    return g == 1


@dataclass
class GammaResult:
    q: int
    value: Fraction | None
    float_value: complex
    difference: float

    @property
    def trace(self) -> Fraction:
        """q^r Gamma(q), the partial local factor."""
        return self.value * self._scale

    _scale: int = 1


def gamma_count(profile, phi_or_k, mode: SeriesMode, q: int) -> GammaResult:
    """Gamma(q) via the weighted congruence count, checked against the b-sum."""
    source = kappa_source(profile)
    phi = _phi(phi_or_k)
    _check_mode(phi, mode)
    if q < 1:
        raise ValueError("q must be positive")
    exact = _gamma_exact(_dists(source, phi), q, mode)
    flt = complex(np.sum(_terms_float(source, phi, q, mode))) / q**phi.r
    diff = abs(flt - float(exact))
    if diff > CROSS_TOL * max(1.0, abs(float(exact))):
        raise CrossCheckError(f"Gamma({q}) paths disagree: exact {float(exact)!r}, b-sum {flt!r}")
    return GammaResult(q, exact, flt, diff, q**phi.r)


@lru_cache(maxsize=4096)
def _ramanujan(q: int, r: int) -> np.ndarray:
    return ramanujan_sums(q, r)


def _b_exact(dist: _Distributions, q: int, mode: SeriesMode) -> Fraction:
    """B(q) via Ramanujan sums: sum over reduced b of term(q, b), exactly."""
    r = dist.phi.r
    R = _ramanujan(q, r)
    if isinstance(mode, MeanValue):
        P, d = dist.power(q, mode.s)
        D = _autocorrelation(P)
        tot = sum(int(a) * int(b) for a, b in zip(D.ravel(), R.ravel()) if a and b)
        return Fraction(tot, d * d)
    P, d = dist.target_law(q, mode)
    n = mode.n % q
    shift = np.roll(R, n)  # shift[v] = c_q(v - n)
    tot = sum(int(a) * int(b) for a, b in zip(P, shift) if a and b)
    return Fraction(tot, d)


def b_term(profile, phi_or_k, mode: SeriesMode, q: int, check: bool = True) -> Fraction:
    """B(q) exactly, optionally cross-checked against the direct reduced b-sum."""
    source = kappa_source(profile)
    phi = _phi(phi_or_k)
    _check_mode(phi, mode)
    val = _b_exact(_dists(source, phi), q, mode)
    if check:
        t = _terms_float(source, phi, q, mode)
        flt = complex(np.sum(t[_reduced_mask(q, phi.r)]))
        if abs(flt - float(val)) > CROSS_TOL * max(1.0, abs(float(val))):
            raise CrossCheckError(f"B({q}) paths disagree: exact {float(val)!r}, b-sum {flt!r}")
    return val


# ----------------------------------------------------------------------------
# truncated series and tail fits
# ----------------------------------------------------------------------------


@dataclass
class TailFit:
    delta: float | None
    residual: float
    converged: bool
    exact_at: float | None = None


def tail_fit(dyadic: Sequence[tuple[float, float]]) -> TailFit:
    """Negated slope of log|diff| against log Q."""
    pts = [(float(Q), abs(float(d))) for Q, d in dyadic]
    if len(pts) < 3:
        raise ValueError("tail_fit needs at least three dyadic points")
    zeros = [Q for Q, d in pts if d == 0.0]
    if zeros:
        return TailFit(None, 0.0, True, exact_at=min(zeros))
    x = np.log([Q for Q, _ in pts])
    y = np.log([d for _, d in pts])
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + icpt))))
    delta = float(-slope)
    if abs(delta) < 1e-12:
        delta = 0.0
    return TailFit(delta, resid, delta > 0)


def dyadic_points(Q: int, minimum: int = 1) -> list[int]:
    """Q, Q/2, Q/4, ... down to ``minimum`` (integer parts), ascending."""
    out = []
    while Q >= minimum and Q >= 1:
        out.append(int(Q))
        Q //= 2
    return sorted(set(out))


@dataclass
class LocalFactor:
    p: int
    trace: list[Fraction]
    partial: list[Fraction]
    value: Fraction
    stabilized: bool
    stable_from: int | None

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "trace": [str(v) for v in self.trace],
            "value": str(self.value),
            "stabilized": self.stabilized,
            "stableFrom": self.stable_from,
        }


@dataclass
class SingularReport:
    mode: SeriesMode
    Q: int
    value: Fraction
    per_q: list[tuple[int, Fraction]]
    dyadic: list[tuple[int, float]]
    tail: TailFit | None
    local_factors: dict[int, LocalFactor] = field(default_factory=dict)

    def partial(self, Q: int) -> Fraction:
        return sum((t for q, t in self.per_q if q <= Q), Fraction(0))

    def to_json(self) -> dict:
        return {
            "mode": self.mode.to_json(),
            "Q": self.Q,
            "value": str(self.value),
            "valueFloat": float(self.value),
            "perQ": [[q, str(t), float(t)] for q, t in self.per_q],
            "dyadic": [[Q, d] for Q, d in self.dyadic],
            "fittedTailExponent": None if self.tail is None else self.tail.delta,
            "localFactors": {str(p): lf.to_json() for p, lf in sorted(self.local_factors.items())},
        }

    def per_q_csv(self) -> str:
        return "q,term\n" + "".join(f"{q},{float(t)!r}\n" for q, t in self.per_q)


def truncated_series(
    profile,
    phi_or_k,
    mode: SeriesMode,
    Q: int,
    *,
    dyadic_from: int = 1,
    check: bool = True,
) -> SingularReport:
    """S(Q) = sum_{q <= Q} B(q) exactly, with per-q terms and a dyadic trace.

    The dyadic trace lists (Q', |S(Q') - S(Q'/2)|) for Q' = Q, Q/2, ... while
    Q'/2 >= ``dyadic_from``.
    """
    source = kappa_source(profile)
    phi = _phi(phi_or_k)
    _check_mode(phi, mode)
    if Q < 1:
        raise ValueError("Q must be positive")
    if Q > source.level:
        raise KeyError(f"Q={Q} exceeds the profiled level {source.level}")
    dist = _dists(source, phi)
    per_q = []
    total = Fraction(0)
    partial = {}
    for q in range(1, Q + 1):
        t = _b_exact(dist, q, mode)
        if check:
            terms = _terms_float(source, phi, q, mode)
            flt = complex(np.sum(terms[_reduced_mask(q, phi.r)]))
            if abs(flt - float(t)) > CROSS_TOL * max(1.0, abs(float(t))):
                raise CrossCheckError(f"B({q}) paths disagree: exact {float(t)!r}, b-sum {flt!r}")
        per_q.append((q, t))
        total += t
        partial[q] = total
    dyadic = []
    Qd = Q
    while Qd // 2 >= max(dyadic_from, 1):
        dyadic.append((Qd // 2, abs(float(partial[Qd] - partial[Qd // 2]))))
        Qd //= 2
    dyadic.sort()
    tail = tail_fit(dyadic) if len(dyadic) >= 3 else None
    return SingularReport(mode, Q, total, per_q, dyadic, tail)


def waring_series_table(profile, k: int, s: int, Q: int, u: int = 0) -> list[tuple[int, np.ndarray, int]]:
    """For each q <= Q: integer numerators of B(q; m) for all residues m, and a denominator.

    Lets one evaluate S(Q; n) for many n cheaply: sum_q B(q; n mod q).
    """
    source = kappa_source(profile)
    phi = PolySystem.monomial(k)
    dist = _dists(source, phi)
    mode = Mixed(s, u, 0) if u else Waring(s, 0)
    out = []
    for q in range(1, Q + 1):
        P, d = dist.target_law(q, mode)
        R = _ramanujan(q, 1)
        idx = (np.arange(q)[None, :] - np.arange(q)[:, None]) % q  # [m, v] -> v - m
        C = R[idx]
        if _fits(C, P, q):
            B = C @ P.astype(np.int64)
        else:
            B = C.astype(object) @ P.astype(object)
        out.append((q, B, d))
    return out


def series_values(table, ns: Sequence[int]) -> np.ndarray:
    """Evaluate S(Q; n) for each n from a ``waring_series_table``."""
    ns = np.asarray(ns, dtype=np.int64)
    acc = np.zeros(len(ns))
    for q, B, d in table:
        acc += np.array([int(B[m]) for m in ns % q], dtype=float) / d
    return acc


# ----------------------------------------------------------------------------
# local factors and Euler products
# ----------------------------------------------------------------------------


def local_factor(profile, phi_or_k, mode: SeriesMode, p: int, hMax: int = 6) -> LocalFactor:
    """Trace p^{rh} Gamma(p^h), h = 0..hMax, with the B-partial-sum path asserted equal."""
    source = kappa_source(profile)
    phi = _phi(phi_or_k)
    _check_mode(phi, mode)
    if hMax < 0:
        raise ValueError("hMax must be non-negative")
    if p**hMax > source.level:
        raise KeyError(f"p^hMax = {p**hMax} exceeds the profiled level {source.level}")
    dist = _dists(source, phi)
    trace = [Fraction(1)]
    partial = [Fraction(1)]
    for h in range(1, hMax + 1):
        q = p**h
        trace.append(_gamma_exact(dist, q, mode) * q**phi.r)
        partial.append(partial[-1] + _b_exact(dist, q, mode))
        if trace[-1] != partial[-1]:
            raise CrossCheckError(f"telescoping identity fails at p={p}, h={h}: {trace[-1]} != {partial[-1]}")
    stabilized = hMax >= 1 and _close(trace[-1], trace[-2])
    stable_from = None
    if hMax == 0:
        stabilized, stable_from = True, 0
    elif stabilized:
        stable_from = hMax - 1
        while stable_from > 0 and _close(trace[stable_from - 1], trace[-1]):
            stable_from -= 1
    return LocalFactor(p, trace, partial, trace[-1], stabilized, stable_from)


def _close(a: Fraction, b: Fraction) -> bool:
    if a == b:
        return True
    return abs(float(a - b)) <= STAB_TOL * max(abs(float(a)), abs(float(b)))


@dataclass
class EulerResult:
    value: float
    exact_part: Fraction
    lower: float
    upper: float
    p_max: int
    obstruction: list[int]
    tail_exponent: float | None
    heuristic: bool = True

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "bracket": [self.lower, self.upper],
            "pMax": self.p_max,
            "localObstruction": self.obstruction,
            "tailExponent": self.tail_exponent,
            "tailPolicy": "heuristic",
        }


def euler_product(factors: dict[int, LocalFactor | Fraction | float], p_max: int | None = None) -> EulerResult:
    """Product of local factors over p <= p_max with a heuristic tail bracket.

    The tail is bracketed by fitting |chi_p - 1| ~ C p^{-theta} over the upper
    half of the primes and summing the fitted trend beyond p_max.
    """
    vals = {}
    for p, f in factors.items():
        if isinstance(f, LocalFactor):
            if not f.stabilized:
                raise NonStabilized(f"local factor at p={p} did not stabilise")
            vals[p] = f.value
        else:
            vals[p] = f
    ps = sorted(p for p in vals if p_max is None or p <= p_max)
    p_max = ps[-1] if ps else (p_max or 1)
    exact = Fraction(1)
    prod = 1.0
    for p in ps:
        v = vals[p]
        if isinstance(v, Fraction):
            exact *= v
        prod *= float(v)
    zeros = [p for p in ps if float(vals[p]) == 0.0]
    if zeros:
        return EulerResult(0.0, Fraction(0), 0.0, 0.0, p_max, zeros, None)
    dev = [(p, abs(float(vals[p]) - 1.0)) for p in ps[len(ps) // 2 :] if abs(float(vals[p]) - 1.0) > 0]
    theta = None
    tail = 0.0
    if len(dev) >= 3:
        x = np.log([p for p, _ in dev])
        y = np.log([d for _, d in dev])
        slope, icpt = np.polyfit(x, y, 1)
        theta = float(-slope)
        C = math.exp(icpt + float(np.max(y - (slope * x + icpt))))
        if theta > 1.0:
            # sum_{p > P} p^{-theta} <= int_P^inf t^{-theta} / log t dt <= P^{1-theta} / ((theta-1) log P)
            tail = C * p_max ** (1 - theta) / ((theta - 1) * math.log(p_max))
        else:
            tail = math.inf
    lo = prod * math.exp(-tail) if math.isfinite(tail) else -math.inf
    hi = prod * math.exp(tail) if math.isfinite(tail) else math.inf
    return EulerResult(prod, exact, lo, hi, p_max, [], theta)


def singular_series_euler(
    profile, phi_or_k, mode: SeriesMode, p_max: int, hMax: int = 6
) -> tuple[EulerResult, dict[int, LocalFactor]]:
    """Local factors for all p <= p_max and their product.

    Each prime is traced to depth v_p(k c n) + 2 (+1 at p = 2), capped by
    hMax: enough to witness stabilisation without huge moduli.
    """
    phi = _phi(phi_or_k)
    source = kappa_source(profile)
    special = 1
    for c, k in phi.terms:
        special *= abs(c) * k
    if not isinstance(mode, MeanValue) and mode.n:
        special *= abs(mode.n)
    facs = {}
    for p in prime_sieve(p_max):
        p = int(p)
        v, m = 0, special
        while m % p == 0:
            m //= p
            v += 1
        h = min(hMax, v + (3 if p == 2 else 2))
        facs[p] = local_factor(source, phi, mode, p, h)
    return euler_product(facs, p_max), facs


# ----------------------------------------------------------------------------
# multiplicativity
# ----------------------------------------------------------------------------


@dataclass
class MultiplicativityRecord:
    q: int
    q2: int
    s_identity: bool
    b_identity: bool
    checked: int


def check_multiplicativity(profile, phi_or_k, pairs: Sequence[tuple[int, int]], mode: SeriesMode | None = None) -> list[MultiplicativityRecord]:
    """Verify S(q; b) S(q'; b') = S(qq'; q b' + q' b) for all b, b' as exact group-ring identities.

    Both sides are elements of Q[Z/qq'] (formal sums of roots of unity); equal
    histograms are a sufficient, exact certificate.  When they differ the
    identity is re-tested numerically to 1e-10 and reported as failing.
    B(qq') = B(q) B(q') is checked on the exact rational path.
    """
    source = kappa_source(profile)
    phi = _phi(phi_or_k)
    mode = mode or MeanValue(1)
    r = phi.r
    out = []
    for q, q2 in pairs:
        if math.gcd(q, q2) != 1:
            raise ValueError(f"pair ({q}, {q2}) is not coprime")
        M = q * q2
        n1, d1 = source.int_table(q)
        n2, d2 = source.int_table(q2)
        nM, dM = source.int_table(M)
        l1 = np.arange(q, dtype=np.int64)
        l2 = np.arange(q2, dtype=np.int64)
        lM = np.arange(M, dtype=np.int64)
        # phi values reduced mod M for representatives; e(b phi(l)/q) = e(q2 b phi(l) / M)
        f1 = phi.residues(l1, M)
        f2 = phi.residues(l2, M)
        fM = phi.residues(lM, M)
        ok_s = True
        checked = 0
        for b in np.ndindex(*((q,) * r)):
            e1 = sum(int(bj) * q2 * fj for bj, fj in zip(b, f1)) % M
            for b2 in np.ndindex(*((q2,) * r)):
                e2 = sum(int(bj) * q * fj for bj, fj in zip(b2, f2)) % M
                lhs = np.zeros(M, dtype=object)
                ex = (e1[:, None] + e2[None, :]) % M
                w = np.outer(np.asarray(n1, dtype=object), np.asarray(n2, dtype=object))
                np.add.at(lhs, ex.ravel(), w.ravel())
                bb = [(q * int(x2) + q2 * int(x1)) % M for x1, x2 in zip(b, b2)]
                eM = sum(bj * fj for bj, fj in zip(bb, fM)) % M
                rhs = np.zeros(M, dtype=object)
                np.add.at(rhs, eM, np.asarray(nM, dtype=object))
                checked += 1
                if not np.array_equal(lhs * dM, rhs * (d1 * d2)):
                    zeta = np.exp(1j * TWO_PI * np.arange(M) / M)
                    a = complex(np.dot(lhs.astype(float), zeta)) / (d1 * d2)
                    c = complex(np.dot(rhs.astype(float), zeta)) / dM
                    if abs(a - c) > CROSS_TOL:
                        ok_s = False
        dist = _dists(source, phi)
        ok_b = _b_exact(dist, M, mode) == _b_exact(dist, q, mode) * _b_exact(dist, q2, mode)
        out.append(MultiplicativityRecord(q, q2, ok_s, ok_b, checked))
    return out


# ----------------------------------------------------------------------------
# singular integrals
# ----------------------------------------------------------------------------


def uniform_measure() -> ScaledMeasure:
    """Lebesgue measure on [0, 1]: the classical (naturals) case."""
    star = PiecewiseStar(np.array([0, 1], dtype=np.int64), np.array([0, 1], dtype=np.int64), 1)
    return scaled_measure(star, 1.0)


def _measure(approx, X=None) -> ScaledMeasure:
    if isinstance(approx, (ScaledMeasure, PointMass)):
        return approx
    if X is None:
        if isinstance(approx, PiecewiseStar):
            X = float(approx.x_max)
        else:
            raise ValueError("a scale X is needed for this approximation")
    return scaled_measure(approx, X)


@dataclass
class IntegralReport:
    mode: SeriesMode
    Q: float
    value: float
    dyadic: list[tuple[float, float]]
    tail: TailFit | None
    partials: list[tuple[float, float]]
    change: float
    schmidt: list[tuple[float, float, float]] = field(default_factory=list)
    standard_error: float | None = None

    def to_json(self) -> dict:
        return {
            "mode": self.mode.to_json(),
            "Q": self.Q,
            "value": self.value,
            "partials": [[a, b] for a, b in self.partials],
            "dyadic": [[a, b] for a, b in self.dyadic],
            "fittedTailExponent": None if self.tail is None else self.tail.delta,
            "quadratureChange": self.change,
            "standardError": self.standard_error,
            "schmidt": [[T, w, se] for T, w, se in self.schmidt],
        }


def _integrand(mode: SeriesMode, wA: np.ndarray, wN: np.ndarray | None, gam: np.ndarray) -> np.ndarray:
    if isinstance(mode, MeanValue):
        return np.abs(wA) ** (2 * mode.s) + 0j
    val = wA**mode.s * np.exp(-1j * TWO_PI * np.mod(gam, 1.0))
    if isinstance(mode, Mixed) and mode.u:
        val = val * wN**mode.u
    return val


def truncated_integral(
    approx,
    phi_or_k,
    mode: SeriesMode,
    Q: float,
    X: float | None = None,
    *,
    panel_width: float = 0.5,
    nodes: int = GAUSS_NODES,
    dyadic_from: float = 1.0,
    tol: float = 1e-8,
    samples: int = 1 << 14,
    seed: int = 0,
) -> IntegralReport:
    """J(Q) = int over |gamma| <= Q of the mode's integrand in w_A.

    r = 1 uses Gauss panels on [0, Q] (conjugate symmetry gives the negative
    half) and checks against a layout with twice-wider panels; r = 2 uses a
    tensor Gauss rule; r > 2 uses Monte Carlo with a standard error.
    """
    phi = _phi(phi_or_k)
    _check_mode(phi, mode)
    if Q <= 0:
        raise ValueError("Q must be positive")
    m = _measure(approx, X)
    if phi.r == 1:
        return _integral_1d(m, phi, mode, float(Q), panel_width, nodes, dyadic_from, tol)
    if not isinstance(mode, MeanValue):
        raise ValueError("systems support the mean-value integral only")
    return _integral_multi(m, phi, mode, float(Q), samples, seed)


_TABLES: dict = {}


def _cached_table(m: ScaledMeasure, phi: PolySystem, Q: float):
    key = (id(m), phi, Q)
    hit = _TABLES.get(key)
    if hit is None or hit[0] is not m:
        if len(_TABLES) > 16:
            _TABLES.clear()
        hit = (m, w_table(m, phi, Q))
        _TABLES[key] = hit
    return hit[1]


_UNIFORM: list = []


def _uniform_cached() -> ScaledMeasure:
    if not _UNIFORM:
        _UNIFORM.append(uniform_measure())
    return _UNIFORM[0]


def _integral_1d(m, phi, mode, Q, width, nodes, dyadic_from, tol) -> IntegralReport:
    table = _cached_table(m, phi, Q) if isinstance(m, ScaledMeasure) else None
    nat = None
    if isinstance(mode, Mixed) and mode.u:
        nat = _cached_table(_uniform_cached(), phi, Q)

    def wvals(g):
        if table is None:
            return m.w(phi, g)
        return table(g)

    def run(h):
        n_pan = max(1, int(math.ceil(Q / h)))
        edges = np.linspace(0.0, Q, n_pan + 1)
        x, w = panel_nodes(edges, np.ones(n_pan, dtype=np.int64), nodes)
        wA = wvals(x)
        wN = nat(x) if nat is not None else None
        vals = (w * _integrand(mode, wA, wN, x)).reshape(n_pan, nodes).sum(axis=1)
        return edges, 2.0 * np.real(vals)

    edges, pan = run(width)
    _, coarse = run(2 * width)
    fine_total = float(np.sum(pan))
    change = abs(fine_total - float(np.sum(coarse)))
    if change > tol * max(1.0, abs(fine_total)):
        raise QuadratureError(f"outer quadrature change {change:.3e} exceeds {tol:.1e}")
    cum = np.concatenate([[0.0], np.cumsum(pan)])

    def partial(Qd):
        i = int(round(Qd / (edges[1] - edges[0])))
        if abs(edges[i] - Qd) > 1e-9 * max(1.0, Qd):
            # non-aligned point: integrate the remaining piece directly
            j = int(np.searchsorted(edges, Qd)) - 1
            x, w = panel_nodes(np.array([edges[j], Qd]), np.array([1]), nodes)
            wN = nat(x) if nat is not None else None
            return float(cum[j] + 2.0 * np.real(np.sum(w * _integrand(mode, wvals(x), wN, x))))
        return float(cum[i])

    pts = []
    Qd = Q
    while Qd >= dyadic_from:
        pts.append(Qd)
        Qd /= 2
    pts.sort()
    partials = [(q, partial(q)) for q in pts]
    dyadic = [(partials[i - 1][0], abs(partials[i][1] - partials[i - 1][1])) for i in range(1, len(partials))]
    tail = tail_fit(dyadic) if len(dyadic) >= 3 else None
    return IntegralReport(mode, Q, fine_total, dyadic, tail, partials, change)


def _w_multi(m: ScaledMeasure, phi: PolySystem, gammas: np.ndarray, z: np.ndarray, wz: np.ndarray) -> np.ndarray:
    pw = np.stack([c * z**k for c, k in phi.terms])  # (r, nz)
    out = np.empty(len(gammas), dtype=complex)
    for j in range(0, len(gammas), 256):
        ph = np.mod(gammas[j : j + 256] @ pw, 1.0)
        out[j : j + 256] = np.exp(1j * TWO_PI * ph) @ wz
    return out


def _integral_multi(m, phi, mode, Q, samples, seed) -> IntegralReport:
    r = phi.r
    freq = sum(abs(c) for c, _ in phi.terms) * Q
    cnt = np.maximum(np.ceil(8 * freq * np.diff(m.edges) / max(m.z_max, 1e-300)), 64).astype(np.int64)
    z, w = panel_nodes(m.edges, cnt)
    wz = w * m.density(z)
    vol = (2 * Q) ** r
    if r == 2:
        n_pan = max(1, int(math.ceil(2 * Q / 0.5)))
        g1, gw = panel_nodes(np.linspace(-Q, Q, n_pan + 1), np.ones(n_pan, dtype=np.int64))
        G = np.stack(np.meshgrid(g1, g1, indexing="ij"), axis=-1).reshape(-1, 2)
        W = np.outer(gw, gw).ravel()
        val = float(np.sum(W * np.abs(_w_multi(m, phi, G, z, wz)) ** (2 * mode.s)))
        return IntegralReport(mode, Q, val, [], None, [(Q, val)], 0.0)
    rng = np.random.default_rng(seed)
    G = rng.uniform(-Q, Q, size=(samples, r))
    f = np.abs(_w_multi(m, phi, G, z, wz)) ** (2 * mode.s) * vol
    val = float(f.mean())
    se = float(f.std(ddof=1) / math.sqrt(samples))
    return IntegralReport(mode, Q, val, [], None, [(Q, val)], 0.0, standard_error=se)


# ----------------------------------------------------------------------------
# Schmidt's smoothed integral W_T
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    """All of the measure at one point z0 of [0, 1]."""

    z0: float

    def sample(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), float(self.z0))

    def cdf(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=float) >= self.z0).astype(float)

    def w(self, phi: PolySystem, gammas: np.ndarray) -> np.ndarray:
        return np.exp(1j * TWO_PI * np.mod(np.asarray(gammas) * phi.values(np.array([self.z0]))[0][0], 1.0))

    @property
    def z_max(self) -> float:
        return float(self.z0)


def kernel_h(T: float, y: np.ndarray) -> np.ndarray:
    """Tent kernel h_T(y) = T (1 - T|y|)_+."""
    return T * np.maximum(1.0 - T * np.abs(y), 0.0)


def kernel_K(T: float, gamma: np.ndarray) -> np.ndarray:
    """Fourier transform of h_T: sinc^2(gamma / T) (normalised sinc)."""
    return np.sinc(np.asarray(gamma, dtype=float) / T) ** 2


class _IntegratedCDF:
    """H(c) = E[(c - V)_+] for V = c1 * z^k, z drawn from a scaled measure."""

    def __init__(self, m, c1: float, k: int, cells: int = 1 << 14):
        self.point = isinstance(m, PointMass)
        if self.point:
            self.v0 = c1 * m.z0**k
            return
        zmax = m.z_max
        ends = sorted([0.0, c1 * zmax**k])
        self.lo, self.hi = ends
        self.c1, self.k, self.m = c1, k, m
        # breakpoints of F: images of the measure's smooth-piece edges
        bps = np.unique(np.concatenate([c1 * m.edges**k, [self.lo, self.hi]]))
        per = np.maximum(1, np.ceil(cells * np.diff(bps) / (self.hi - self.lo))).astype(np.int64)
        grid = [np.linspace(a, b, n + 1)[:-1] for a, b, n in zip(bps[:-1], bps[1:], per)]
        self.grid = np.append(np.concatenate(grid), bps[-1])
        x, w = panel_nodes(self.grid, np.ones(len(self.grid) - 1, dtype=np.int64), 8)
        inc = (w * self.F(x)).reshape(-1, 8).sum(axis=1)
        self.H = np.concatenate([[0.0], np.cumsum(inc)])
        self.Fg = self.F(self.grid)
        self.mean = self.hi - self.H[-1]

    def F(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(v / self.c1 > 0, np.abs(v / self.c1) ** (1.0 / self.k), 0.0)
        cdf = self.m.cdf(z)
        if self.c1 < 0:
            cdf = 1.0 - cdf
        return np.clip(cdf, 0.0, 1.0)

    def __call__(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.point:
            return np.maximum(c - self.v0, 0.0)
        out = np.where(c >= self.hi, c - self.mean, 0.0)
        inside = (c > self.lo) & (c < self.hi)
        ci = c[inside]
        i = np.clip(np.searchsorted(self.grid, ci, side="right") - 1, 0, len(self.grid) - 2)
        a, b = self.grid[i], self.grid[i + 1]
        h = b - a
        t = (ci - a) / h
        # cubic Hermite with exact slopes F at both ends
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        out[inside] = h00 * self.H[i] + h10 * h * self.Fg[i] + h01 * self.H[i + 1] + h11 * h * self.Fg[i + 1]
        return out


@dataclass
class WTResult:
    T: float
    value: float
    standard_error: float
    samples: int
    seed: int
    gamma_side: float | None = None


def schmidt_WT(
    approx,
    phi_or_k,
    s: int,
    Ts: Sequence[float],
    X: float | None = None,
    *,
    samples: int = 1 << 18,
    batches: int = 16,
    seed: int = 0,
    se_cap: float | None = None,
    gamma_side_Q: float | None = None,
) -> list[WTResult]:
    """W_T = int prod_j h_T(Phi_j(xi) - Phi_j(zeta)) d sigma^{2s} by stratified Monte Carlo.

    Points are drawn by mapping stratified uniforms through z.  For a single
    polynomial the last variable is integrated analytically through the
    integrated CDF H of V = phi(z):  E h_T(Y - V) = T^2 (H(Y+1/T) - 2H(Y) + H(Y-1/T)).
    All T share the same random numbers; standard errors come from independent
    replicate batches.
    """
    phi = _phi(phi_or_k)
    if s < 1:
        raise ValueError("s must be positive")
    Ts = [float(T) for T in Ts]
    if any(T < 1 for T in Ts):
        raise ValueError("T must be at least 1")
    m = _measure(approx, X)
    rng = np.random.default_rng(seed)
    per = max(2, samples // batches)
    r = phi.r
    ests = np.zeros((batches, len(Ts)))
    H = _IntegratedCDF(m, *phi.terms[0]) if r == 1 else None
    for bi in range(batches):
        nvar = 2 * s - 1 if r == 1 else 2 * s
        U = (rng.permuted(np.tile(np.arange(per), (nvar, 1)), axis=1) + rng.random((nvar, per))) / per
        Z = m.sample(U)
        vals = np.stack([c * Z**k for c, k in phi.terms])  # (r, nvar, per)
        Y = vals[:, :s, :].sum(axis=1) - vals[:, s:, :].sum(axis=1)  # (r, per)
        for ti, T in enumerate(Ts):
            if r == 1:
                y = Y[0]
                est = T * T * (H(y + 1 / T) - 2 * H(y) + H(y - 1 / T))
            else:
                est = np.prod(kernel_h(T, Y), axis=0)
            ests[bi, ti] = est.mean()
    out = []
    for ti, T in enumerate(Ts):
        mean = float(ests[:, ti].mean())
        se = float(ests[:, ti].std(ddof=1) / math.sqrt(batches))
        if se_cap is not None and se > se_cap:
            raise RuntimeError(f"W_T standard error {se:.3e} exceeds cap {se_cap:.3e} at T={T}")
        gs = None
        if gamma_side_Q is not None and r == 1:
            gs = wt_gamma_side(m, phi, s, T, gamma_side_Q)
        out.append(WTResult(T, mean, se, per * batches, seed, gs))
    return out


def wt_gamma_side(approx, phi_or_k, s: int, T: float, Q: float, X: float | None = None, width: float = 0.5) -> float:
    """Deterministic W_T = int_{|gamma| <= Q} |w|^{2s} K_T d gamma (r = 1)."""
    phi = _phi(phi_or_k)
    m = _measure(approx, X)
    n_pan = max(1, int(math.ceil(Q / width)))
    x, w = panel_nodes(np.linspace(0.0, Q, n_pan + 1), np.ones(n_pan, dtype=np.int64))
    wv = m.w(phi, x) if isinstance(m, PointMass) else _cached_table(m, phi, Q)(x)
    return float(2.0 * np.sum(w * np.abs(wv) ** (2 * s) * kernel_K(T, x)))


# ----------------------------------------------------------------------------
# lower bounds and classical closed forms
# ----------------------------------------------------------------------------


def integral_lower_bound(phi_or_k, t0: int) -> float:
    """(4 M pi r)^{-r} 2^{-2 t0} with M = max_j sup_[0,1] |phi_j|."""
    phi = _phi(phi_or_k)
    M = phi.sup_abs_unit()
    return (4 * M * math.pi * phi.r) ** (-phi.r) * 2.0 ** (-2 * t0)


def naturals_integral(k: int, s: int) -> float:
    """Gamma(1 + 1/k)^s / Gamma(s/k): the Waring singular integral for the naturals."""
    return math.gamma(1 + 1 / k) ** s / math.gamma(s / k)
