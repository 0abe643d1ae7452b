"""Small exact number-theory helpers shared across the package."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

INT64_SAFE = 2**62


def prime_sieve(limit: int) -> np.ndarray:
    """All primes <= limit as an int64 array."""
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


@lru_cache(maxsize=4096)
def factorize(n: int) -> tuple[tuple[int, int], ...]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            e = 0
            while n % d == 0:
                n //= d
                e += 1
            out.append((d, e))
        d += 1 if d == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def divisors(n: int) -> list[int]:
    divs = [1]
    for p, e in factorize(n):
        divs = [d * p**i for d in divs for i in range(e + 1)]
    return sorted(divs)


def totient(n: int) -> int:
    result = n
    for p, _ in factorize(n):
        result -= result // p
    return result


def mobius(n: int) -> int:
    fac = factorize(n)
    if any(e > 1 for _, e in fac):
        return 0
    return -1 if len(fac) % 2 else 1


def ramanujan_sums(q: int, r: int = 1) -> np.ndarray:
    """Generalised Ramanujan sum over reduced tuples, as an integer table.

    Returns an array ``R`` of shape ``(q,)*r`` with
    ``R[v] = sum over b in (Z/q)^r with gcd(q, b)=1 of e(b.v/q)``,
    evaluated exactly by Mobius inversion:
    ``R[v] = sum_{d | q} mu(d) (q/d)^r [ (q/d) | v_j for all j ]``.
    """
    out = np.zeros((q,) * r, dtype=np.int64)
    for d in divisors(q):
        mu = mobius(d)
        if mu == 0:
            continue
        m = q // d
        # indicator that every component is divisible by m
        sl = tuple(slice(0, q, m) for _ in range(r))
        out[sl] += mu * m**r
    return out


def crt_pair(q1: int, b1: int, q2: int, b2: int) -> int:
    """The unique c mod q1*q2 with c = b1 (q1), c = b2 (q2); moduli coprime."""
    inv = pow(q1, -1, q2)
    return (b1 + q1 * ((b2 - b1) * inv % q2)) % (q1 * q2)


def rho0(k: int) -> float:
    """Classical admissible Weyl exponent for degree k."""
    return 1.0 / rho0_inverse(k)


def rho0_inverse(k: int) -> int:
    if k < 1:
        raise ValueError("degree must be positive")
    return min(2 ** (k - 1), (k - 1) * (k - 2) + 2 * math.isqrt(2 * k))


RHO0_TABLE = {k: rho0(k) for k in range(1, 65)}


def powmod_array(x: np.ndarray, k: int, q: int) -> np.ndarray:
    """x**k mod q elementwise, exact for q < 2**31."""
    if q >= 2**31:
        return np.array([pow(int(v), k, q) for v in x], dtype=object)
    x = np.asarray(x, dtype=np.int64) % q
    out = np.ones_like(x)
    base = x.copy()
    while k:
        if k & 1:
            out = out * base % q
        base = base * base % q
        k >>= 1
    return out
