"""Exact representation counts and mean values by integer convolution.

Tables hold integer numerators over a single common denominator, so every
count is exact.  The default convolution multiplies a sparse table (the
k-th powers of the set) into a dense one by shifted additions; dense-dense
products use Karatsuba on top of numpy's integer convolution.  A number
theoretic transform over three word-sized primes is available as a fast
mode and is always cross-checked against the exact path on random windows.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expsum import PolySystem
from .sets import WeightedSet

INT64_LIMIT = 2**62
SCHOOLBOOK_MAX = 1 << 14
MITM_BUDGET = 10**8


class BudgetExceeded(MemoryError):
    """A table would exceed the configured memory or combinatorial budget."""


def budget_bytes() -> int:
    mb = float(os.environ.get("CIRCLEFORGE_BUDGET_MB", "2048"))
    return int(mb * 2**20)


def check_budget(entries: int, what: str, item_bytes: int = 8) -> None:
    need = entries * item_bytes
    if need > budget_bytes():
        raise BudgetExceeded(f"{what}: {entries} entries ({need / 2**20:.1f} MB) exceed the budget of {budget_bytes() / 2**20:.0f} MB")


def iroot(n: int, k: int) -> int:
    """floor(n^(1/k)) exactly."""
    if n < 0:
        raise ValueError("negative radicand")
    if n < 2:
        return n
    x = int(round(n ** (1.0 / k)))
    while x**k > n:
        x -= 1
    while (x + 1) ** k <= n:
        x += 1
    return x


# ----------------------------------------------------------------------------
# integer convolution kernels
# ----------------------------------------------------------------------------


def _max_abs(a: np.ndarray) -> int:
    return max((abs(int(v)) for v in (a.max(), a.min())), default=0) if len(a) else 0


def _result_dtype(a: np.ndarray, b: np.ndarray):
    if a.dtype == object or b.dtype == object:
        return object
    bound = _max_abs(a) * _max_abs(b) * min(len(a), len(b))
    return np.int64 if bound < INT64_LIMIT else object


def convolve_sparse(a: np.ndarray, b: np.ndarray, nmax: int | None = None) -> np.ndarray:
    """Exact a * b by shifted additions over the nonzero entries of the sparser factor."""
    if np.count_nonzero(a) > np.count_nonzero(b):
        a, b = b, a
    n = len(a) + len(b) - 1
    if nmax is not None:
        n = min(n, nmax + 1)
    dt = _result_dtype(a, b)
    out = np.zeros(n, dtype=dt)
    bb = b.astype(dt)
    for i in np.flatnonzero(a):
        if i >= n:
            break
        m = min(len(bb), n - i)
        out[i : i + m] += int(a[i]) * bb[:m] if dt == object else a[i] * bb[:m]
    return out


def _karatsuba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(len(a), len(b))
    if min(len(a), len(b)) <= 64 or n <= SCHOOLBOOK_MAX:
        return np.convolve(a, b)
    la, lb = len(a), len(b)
    if la != lb:
        a, b = _pad(a, n - 1), _pad(b, n - 1)
        return _karatsuba(a, b)[: la + lb - 1]
    h = n // 2
    a0, a1 = a[:h], a[h:]
    b0, b1 = b[:h], b[h:]
    z0 = _karatsuba(a0, b0)
    z2 = _karatsuba(a1, b1)
    sa = _padd(a0, a1)
    sb = _padd(b0, b1)
    z1 = _karatsuba(sa, sb)
    z1 = _psub(_psub(z1, z0), z2)
    out = np.zeros(len(a) + len(b) - 1, dtype=a.dtype)
    out[: len(z0)] += z0
    out[h : h + len(z1)] += z1[: len(out) - h]
    out[2 * h : 2 * h + len(z2)] += z2
    return out


def _padd(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(x) < len(y):
        x, y = y, x
    out = x.copy()
    out[: len(y)] += y
    return out


def _psub(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = x.copy()
    out[: len(y)] -= y
    return out


def convolve_dense(a: np.ndarray, b: np.ndarray, nmax: int | None = None) -> np.ndarray:
    """Exact a * b: schoolbook for small tables, Karatsuba above 2^14 entries."""
    if nmax is not None:
        a, b = a[: nmax + 1], b[: nmax + 1]
    dt = _result_dtype(a, b)
    out = _karatsuba(a.astype(dt), b.astype(dt))
    return out if nmax is None else out[: nmax + 1]


# -- number theoretic transform (fast mode) -----------------------------------

NTT_PRIMES = (998244353, 167772161, 469762049)
NTT_ROOT = 3


def _powers(w: int, h: int, p: int) -> np.ndarray:
    """[1, w, w^2, ..., w^{h-1}] mod p by repeated doubling."""
    tw = np.ones(h, dtype=np.int64)
    m = 1
    while m < h:
        step = pow(w, m, p)
        tw[m : 2 * m] = tw[: min(m, h - m)] * step % p
        m *= 2
    return tw


def _bit_reversal(n: int) -> np.ndarray:
    rev = np.zeros(1, dtype=np.int64)
    while len(rev) < n:
        rev = np.concatenate([rev * 2, rev * 2 + 1])
    return rev


def _ntt(a: np.ndarray, p: int, invert: bool = False) -> np.ndarray:
    n = len(a)
    a = a.copy()
    a = a[_bit_reversal(n)]
    h = 1
    while h < n:
        w = pow(NTT_ROOT, (p - 1) // (2 * h), p)
        if invert:
            w = pow(w, p - 2, p)
        tw = _powers(w, h, p)
        blocks = a.reshape(-1, 2 * h)
        u = blocks[:, :h].copy()
        v = blocks[:, h:] * tw % p
        blocks[:, :h] = (u + v) % p
        blocks[:, h:] = (u - v) % p
        a = blocks.reshape(-1)
        h *= 2
    if invert:
        a = a * pow(n, p - 2, p) % p
    return a


def convolve_ntt(a: np.ndarray, b: np.ndarray, nmax: int | None = None) -> np.ndarray:
    """a * b via NTT modulo three primes and Garner reconstruction.

    Exact only while every true coefficient is below the prime product
    (about 2^86); callers treat this mode as unverified.
    """
    if a.dtype == object or b.dtype == object:
        if max(_max_abs(a), _max_abs(b)) >= 2**62:
            raise OverflowError("fast mode needs coefficients below 2^62")
        a, b = a.astype(np.int64), b.astype(np.int64)
    if (a < 0).any() or (b < 0).any():
        raise ValueError("fast mode handles nonnegative tables only")
    n = len(a) + len(b) - 1
    size = 1 << max(0, (n - 1).bit_length())
    if size > 1 << 23:
        raise BudgetExceeded("NTT length exceeds 2^23")
    residues = []
    for p in NTT_PRIMES:
        fa = np.zeros(size, dtype=np.int64)
        fb = np.zeros(size, dtype=np.int64)
        fa[: len(a)] = a % p
        fb[: len(b)] = b % p
        prod = _ntt(fa, p) * _ntt(fb, p) % p
        residues.append(_ntt(prod, p, invert=True)[:n])
    m1, m2, m3 = NTT_PRIMES
    r1, r2, r3 = residues
    t2 = (r2 - r1) % m2 * pow(m1, -1, m2) % m2
    base = (r1 + m1 % m3 * t2) % m3
    t3 = (r3 - base) % m3 * pow(m1 * m2 % m3, -1, m3) % m3
    if int(t3.max(initial=0)) == 0:
        out = r1 + m1 * t2
    else:
        out = r1.astype(object) + m1 * t2.astype(object) + (m1 * m2) * t3.astype(object)
        if max(out, default=0) < INT64_LIMIT:
            out = out.astype(np.int64)
    return out if nmax is None else out[: nmax + 1]


# ----------------------------------------------------------------------------
# representation tables
# ----------------------------------------------------------------------------


@dataclass
class RepTable:
    """c[m] = numer[m] / denom for m in [0, nmax]; s-fold power of the k-th powers."""

    k: int
    X: int
    s: int
    numer: np.ndarray
    denom: int
    complete_below: int = field(default=0)

    @property
    def nmax(self) -> int:
        return len(self.numer) - 1

    def __getitem__(self, n: int) -> Fraction:
        if not 0 <= n <= self.nmax:
            raise IndexError(f"n={n} outside [0, {self.nmax}]")
        return Fraction(int(self.numer[n]), self.denom)

    def values(self) -> list[Fraction]:
        return [Fraction(int(v), self.denom) for v in self.numer]

    def floats(self) -> np.ndarray:
        return np.array([int(v) for v in self.numer], dtype=float) / self.denom

    def mass(self) -> Fraction:
        return Fraction(sum(int(v) for v in self.numer), self.denom)

    def to_csv(self) -> str:
        rows = ["n,count"]
        for n, v in enumerate(self.numer):
            f = Fraction(int(v), self.denom)
            rows.append(f"{n},{f.numerator if f.denominator == 1 else f}")
        return "\n".join(rows) + "\n"


def rep_poly(A: WeightedSet, k: int, X: int | None = None, ceiling: int | None = None) -> RepTable:
    """Generating table c[x^k] = a_x for the support up to X."""
    X = A.bound if X is None else int(X)
    if X > A.bound:
        raise ValueError(f"X={X} exceeds materialised bound {A.bound}")
    top = X**k
    if ceiling is not None and top > ceiling:
        raise BudgetExceeded(f"index X^k = {top} exceeds ceiling {ceiling}")
    check_budget(top + 1, "rep table")
    i = int(np.searchsorted(A.support, X, side="right"))
    out = np.zeros(top + 1, dtype=A.numer.dtype)
    idx = A.support[:i].astype(object) ** k if top >= INT64_LIMIT else A.support[:i] ** k
    out[np.asarray(idx, dtype=np.int64)] = A.numer[:i]
    return RepTable(k, X, 1, out, A.denom, (X + 1) ** k)


def _power_table(base: RepTable, s: int, nmax: int, mode: str) -> np.ndarray:
    cur = base.numer[: nmax + 1]
    for _ in range(s - 1):
        if mode == "fast":
            cur = convolve_ntt(cur, base.numer[: nmax + 1], nmax)
        else:
            cur = convolve_sparse(cur, base.numer[: nmax + 1], nmax)
    return cur


@dataclass
class FastCheck:
    windows: list[tuple[int, int]]
    agree: bool


@dataclass
class CountResult:
    table: RepTable
    mode: str
    check: FastCheck | None = None


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    if len(a) >= n + 1:
        return a[: n + 1]
    out = np.zeros(n + 1, dtype=a.dtype)
    out[: len(a)] = a
    return out


def count_representations(
    A: WeightedSet,
    k: int,
    s: int,
    nmax: int,
    *,
    mode: str = "exact",
    check_windows: int = 3,
    window: int = 64,
    seed: int = 0,
) -> CountResult:
    """R_{s;k}(n; A) for 0 <= n <= nmax.

    Counts are exact for n below ``complete_below`` = (X+1)^k, X = A.bound; the
    precondition nmax <= s X^k is enforced.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    X = min(A.bound, iroot(nmax, k))
    if nmax > s * A.bound**k:
        raise ValueError(f"nmax={nmax} exceeds s X^k = {s * A.bound**k}")
    check_budget((nmax + 1) * 2, "representation table")
    base = rep_poly(A, k, X)
    base_n = _pad(base.numer, nmax)
    base = RepTable(k, X, 1, base_n, base.denom)
    if mode not in ("exact", "fast"):
        raise ValueError("mode must be 'exact' or 'fast'")
    cur = _power_table(base, s, nmax, mode)
    table = RepTable(k, A.bound, s, _pad(cur, nmax), A.denom**s, (A.bound + 1) ** k)
    check = None
    if mode == "fast":
        check = _cross_check(base, s, nmax, table.numer, check_windows, window, seed)
        if not check.agree:
            raise ArithmeticError(f"fast convolution disagrees with the exact path on windows {check.windows}")
    return CountResult(table, mode, check)


def _cross_check(base: RepTable, s: int, nmax: int, fast: np.ndarray, count: int, width: int, seed: int) -> FastCheck:
    """Exact recomputation of random windows through the sparse path."""
    rng = np.random.default_rng(seed)
    exact = _power_table(base, s, nmax, "exact")
    exact = _pad(exact, nmax)
    wins = []
    agree = True
    for _ in range(count):
        lo = int(rng.integers(0, max(1, nmax - width + 1)))
        hi = min(nmax, lo + width - 1)
        wins.append((lo, hi))
        a = [int(v) for v in fast[lo : hi + 1]]
        b = [int(v) for v in exact[lo : hi + 1]]
        agree &= a == b
    return FastCheck(wins, bool(agree))


def count_mixed(A: WeightedSet, k: int, s: int, u: int, nmax: int, *, mode: str = "exact") -> CountResult:
    """R_{s,u;k}(n; A): s variables from A and u unweighted natural numbers."""
    if s < 1 or u < 0:
        raise ValueError("need s >= 1 and u >= 0")
    if nmax > (s + u) * max(A.bound, iroot(nmax, k)) ** k:
        raise ValueError(f"nmax={nmax} exceeds the largest reachable value")
    # the A-part cannot exceed s X^k; the y-variables carry the rest
    res = count_representations(A, k, s, min(nmax, s * A.bound**k), mode=mode)
    cur = _pad(res.table.numer, nmax)
    y = iroot(nmax, k)
    nat = np.zeros(nmax + 1, dtype=np.int64)
    nat[np.arange(1, y + 1, dtype=np.int64) ** k] = 1
    for _ in range(u):
        cur = convolve_ntt(cur, nat, nmax) if mode == "fast" else convolve_sparse(cur, nat, nmax)
    table = RepTable(k, A.bound, s + u, _pad(cur, nmax), res.table.denom, res.table.complete_below)
    return CountResult(table, mode, res.check)


# ----------------------------------------------------------------------------
# mean values
# ----------------------------------------------------------------------------


@dataclass
class EnergyRecord:
    t: int
    X: int
    value: Fraction
    delta_hat: float
    K: int
    lower_diagonal: Fraction
    lower_cs: Fraction
    lower_bound_ok: bool

    @property
    def lower_bound(self) -> Fraction:
        return max(self.lower_diagonal, self.lower_cs)


def _sum_vector_distribution(
    keys: np.ndarray, weights: np.ndarray, t: int, budget: int
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted distribution of sums of t vectors, with vectors encoded as integers."""
    if t == 0:
        return np.zeros(1, dtype=np.int64), np.ones(1, dtype=weights.dtype)
    if t == 1:
        return _aggregate(keys, weights)
    k1, w1 = _sum_vector_distribution(keys, weights, (t + 1) // 2, budget)
    k2, w2 = _sum_vector_distribution(keys, weights, t // 2, budget)
    if len(k1) * len(k2) > budget:
        raise BudgetExceeded(f"meet-in-the-middle table would hold {len(k1) * len(k2)} entries (> {budget})")
    ks = (k1[:, None] + k2[None, :]).ravel()
    if w1.dtype == object or w2.dtype == object:
        ws = np.multiply.outer(w1.astype(object), w2.astype(object)).ravel()
    else:
        ws = np.multiply.outer(w1, w2).ravel()
    return _aggregate(ks, ws)


def _aggregate(keys: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uk, inv = np.unique(keys, return_inverse=True)
    out = np.zeros(len(uk), dtype=weights.dtype)
    np.add.at(out, inv, weights)
    return uk, out


def mean_value(A: WeightedSet, phi: PolySystem, t: int, X: int | None = None, budget: int = MITM_BUDGET) -> EnergyRecord:
    """I_{t,phi}(X; A): weighted count of solutions of sum phi(x_i) = sum phi(y_i)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    X = A.bound if X is None else int(X)
    B = A.truncate(X)
    if phi.r == 1:
        k = phi.degrees[0]
        base = rep_poly(B, k, X)
        cur = base.numer
        for _ in range(t - 1):
            cur = convolve_sparse(cur, base.numer)
        value_num = sum(int(v) * int(v) for v in cur) if cur.dtype == object else None
        if value_num is None:
            big = _max_abs(cur)
            if big * big * len(cur) < INT64_LIMIT:
                value_num = int(np.dot(cur, cur))
            else:
                value_num = sum(int(v) * int(v) for v in cur)
    else:
        # encode (sum x^{k_1}, ..., sum x^{k_r}) in mixed radix; coefficients c_j
        # do not change the solution set, so plain powers suffice
        radix = [t * X**k + 1 for k in phi.degrees]
        if math.prod(radix) >= INT64_LIMIT:
            raise BudgetExceeded("vector encoding exceeds 64 bits")
        keys = np.zeros(len(B.support), dtype=np.int64)
        mult = 1
        for k, rad in zip(phi.degrees, radix):
            keys += B.support**k * mult
            mult *= rad
        _, dist = _sum_vector_distribution(keys, B.numer, t, budget)
        value_num = sum(int(v) * int(v) for v in dist)
    value = Fraction(value_num, B.denom ** (2 * t))
    AX = B.count_up_to(X)
    K = phi.K
    delta = float(value * X**K / AX ** (2 * t)) if AX else math.nan
    diag = B.sum_sq_weights() ** t
    cells = math.prod(t * X**k - t + 1 for k in phi.degrees)
    cs = AX ** (2 * t) / cells
    ok = value >= diag and value >= cs
    return EnergyRecord(t, X, value, delta, K, diag, cs, ok)


@dataclass
class DeltaEstimate:
    trace: list[tuple[int, float]]
    omega: float
    sigma0: float | None
    records: list[EnergyRecord]


def estimate_delta(
    A: WeightedSet,
    k: int,
    t: int,
    grid: Sequence[int],
    *,
    rho: float | None = None,
    r: int = 1,
) -> DeltaEstimate:
    """Delta-hat per grid point, the slope omega against min(X, A(X)), and sigma_0."""
    grid = [int(x) for x in grid]
    if len(grid) < 3:
        raise ValueError("need at least three grid points")
    if len(set(grid)) < len(grid):
        raise ValueError("grid points must be distinct")
    phi = PolySystem.monomial(k)
    recs = [mean_value(A, phi, t, X) for X in grid]
    xs = np.log([min(float(X), float(A.count_up_to(X))) for X in grid])
    ys = np.log([rec.delta_hat for rec in recs])
    if np.ptp(xs) == 0:
        raise ValueError("degenerate fit: min(X, A(X)) constant over the grid")
    omega = float(np.polyfit(xs, ys, 1)[0])
    if abs(omega) < 1e-12:
        omega = 0.0
    # a negative slope means Delta-hat is still decaying; no budget is consumed
    sigma0 = None if rho is None or rho <= 0 else max(omega, 0.0) * (2 * r + 3) / rho
    return DeltaEstimate([(X, rec.delta_hat) for X, rec in zip(grid, recs)], omega, sigma0, recs)
