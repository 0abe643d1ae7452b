"""Continuous approximants Psi of the counting function A(X).

Two families are provided: the piecewise-linear interpolant through the
support points (``PiecewiseStar``) and the logarithmic-integral profile used
for the primes (``LiProfile``).  Both expose Psi, its right derivative psi,
the least-preimage inverse, and the rescaled map z(xi) that pushes the
uniform measure on [0, 1] to the set-adapted measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .sets import WeightedSet

LI_ABS_TOL = 1e-12
_LOG2 = math.log(2.0)


def li(x: float) -> float:
    """Offset logarithmic integral int_2^x dt / log t by adaptive quadrature."""
    x = float(x)
    if x == 2.0:
        return 0.0
    if x < 2.0:
        if x <= 1.0:
            raise ValueError("li is only evaluated for x > 1")
        return -li_quad(x, 2.0)
    return li_quad(2.0, x)


def li_quad(a: float, b: float) -> float:
    # split at powers of e so each panel sees a tame integrand
    edges = [a]
    t = math.e ** math.ceil(math.log(a))
    while t < b:
        if t > a:
            edges.append(t)
        t *= math.e
    edges.append(b)
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        val, _ = integrate.quad(lambda u: 1.0 / math.log(u), lo, hi, epsabs=LI_ABS_TOL, epsrel=1e-13, limit=200)
        total += val
    return total


def li_vec(x: np.ndarray) -> np.ndarray:
    """Vectorised li via the exponential integral, li(x) = Ei(log x) - Ei(log 2)."""
    x = np.asarray(x, dtype=float)
    return special.expi(np.log(x)) - special.expi(_LOG2)


# ----------------------------------------------------------------------------
# piecewise-linear interpolant
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseStar:
    """Psi* through the points (x_i, A(x_i)), with x_0 = 0 and Psi*(0) = 0.

    ``breaks`` holds x_0 < x_1 < ... < x_N (integers) and ``cum`` the integer
    numerators of A(x_i) over ``denom``.  Psi* is constant beyond x_N.
    """

    breaks: np.ndarray
    cum: np.ndarray
    denom: int = 1
    _breaks_f: np.ndarray = field(init=False, repr=False)
    _cum_f: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.breaks) < 2:
            raise ValueError("need at least one support point")
        object.__setattr__(self, "_breaks_f", self.breaks.astype(float))
        object.__setattr__(self, "_cum_f", np.array([int(c) / self.denom for c in self.cum], dtype=float))

    # -- scalar exact evaluation --------------------------------------------

    @property
    def x_max(self) -> int:
        return int(self.breaks[-1])

    @property
    def total(self) -> Fraction:
        return Fraction(int(self.cum[-1]), self.denom)

    def _piece(self, x) -> int:
        """Index i with x in [x_{i-1}, x_i); N+1 beyond the last point."""
        return int(np.searchsorted(self.breaks, x, side="right"))

    def density(self, i: int) -> Fraction:
        """Density on the i-th interval (x_{i-1}, x_i], 1 <= i <= N."""
        gap = int(self.breaks[i]) - int(self.breaks[i - 1])
        return Fraction(int(self.cum[i]) - int(self.cum[i - 1]), self.denom * gap)

    def evaluate(self, x):
        """(Psi(x), psi(x)); exact Fractions when x is rational."""
        if x < 0:
            raise ValueError("x must be nonnegative")
        exact = isinstance(x, (int, Rational))
        i = self._piece(x)
        if i >= len(self.breaks):
            val = self.total
            return (val, Fraction(0)) if exact else (float(val), 0.0)
        d = self.density(i)
        lo = int(self.breaks[i - 1])
        base = Fraction(int(self.cum[i - 1]), self.denom)
        if exact:
            return base + d * (Fraction(x) - lo), d
        return float(base) + float(d) * (float(x) - lo), float(d)

    def inverse(self, y):
        """Least x with Psi(x) = y."""
        exact = isinstance(y, (int, Rational))
        total = self.total
        if y < 0 or y > total:
            raise ValueError(f"y={y} outside [0, {float(total)}]")
        if y == 0:
            return Fraction(0) if exact else 0.0
        yn = Fraction(y) * self.denom if exact else float(y) * self.denom
        # first i with cum[i] >= y
        i = int(np.searchsorted(self._cum_f * self.denom, float(yn), side="left"))
        i = min(max(i, 1), len(self.cum) - 1)
        # float search may land one off when y sits on a node; correct exactly
        while i > 1 and int(self.cum[i - 1]) >= yn:
            i -= 1
        while int(self.cum[i]) < yn:
            i += 1
        lo = int(self.breaks[i - 1])
        base = Fraction(int(self.cum[i - 1]), self.denom)
        d = self.density(i)
        if exact:
            return lo + (Fraction(y) - base) / d
        return lo + (float(y) - float(base)) / float(d)

    # -- vectorised float evaluation ----------------------------------------

    def psi_values(self, x: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self._breaks_f, self._cum_f)

    def inverse_values(self, y: np.ndarray) -> np.ndarray:
        # cum is strictly increasing, so linear interpolation inverts exactly
        return np.interp(np.asarray(y, dtype=float), self._cum_f, self._breaks_f)

    def density_pieces(self) -> tuple[np.ndarray, np.ndarray]:
        """Merged (edges, densities) of psi; equal-density neighbours fused."""
        gaps = np.diff(self.breaks).astype(float)
        mass = np.diff(self._cum_f)
        dens = mass / gaps
        keep = np.ones(len(dens), dtype=bool)
        # exact comparison of rational densities a/g via cross multiplication
        a = np.array([int(c) for c in np.diff(self.cum)], dtype=object)
        g = np.diff(self.breaks).astype(object)
        keep[1:] = a[1:] * g[:-1] != a[:-1] * g[1:]
        idx = np.flatnonzero(keep)
        edges = np.append(self._breaks_f[idx], self._breaks_f[-1])
        return edges, dens[idx]

    def to_json(self) -> dict:
        return {
            "variant": "piecewise_star",
            "breakpoints": [int(b) for b in self.breaks],
            "values": [str(Fraction(int(c), self.denom)) for c in self.cum],
        }


def build_psi_star(A: WeightedSet) -> PiecewiseStar:
    if len(A.support) == 0:
        raise ValueError("empty support")
    breaks = np.concatenate([[0], A.support]).astype(np.int64)
    cum = np.concatenate([np.zeros(1, dtype=A.numer.dtype), np.cumsum(A.numer)])
    return PiecewiseStar(breaks, cum, A.denom)


# ----------------------------------------------------------------------------
# logarithmic-integral profile
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LiProfile:
    """psi = li(tau)/tau on [0, tau] and 1/log(xi) beyond."""

    tau: float = 3.0
    li_tau: float = field(init=False)

    def __post_init__(self):
        if not self.tau > 2:
            raise ValueError("crossover tau must exceed 2")
        object.__setattr__(self, "li_tau", li(self.tau))

    x_max = math.inf

    def evaluate(self, x) -> tuple[float, float]:
        x = float(x)
        if x < 0:
            raise ValueError("x must be nonnegative")
        if x <= self.tau:
            slope = self.li_tau / self.tau
            return slope * x, slope if x < self.tau else 1.0 / math.log(self.tau)
        return self.li_tau + li_quad(self.tau, x), 1.0 / math.log(x)

    def psi_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x * (self.li_tau / self.tau)
        big = x > self.tau
        if big.any():
            out[big] = self.li_tau + (li_vec(x[big]) - li_vec(np.array([self.tau]))[0])
        return out

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.li_tau / self.tau)
        big = x >= self.tau
        out[big] = 1.0 / np.log(x[big])
        return out

    def inverse(self, y) -> float:
        y = float(y)
        if y < 0:
            raise ValueError("y must be nonnegative")
        if y <= self.li_tau:
            return y * self.tau / self.li_tau
        hi = max(2 * self.tau, y * math.log(y + 2.0))
        while self.evaluate(hi)[0] < y:
            hi *= 2
        f = lambda t: self.li_tau + (li_vec(np.array([t]))[0] - li_vec(np.array([self.tau]))[0]) - y
        x0 = optimize.brentq(f, self.tau, hi, xtol=1e-300, rtol=1e-14, maxiter=500)
        # one Newton polish against the quadrature-based value
        val, dens = self.evaluate(x0)
        return x0 - (val - y) / dens

    def inverse_values(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = y * (self.tau / self.li_tau)
        big = y > self.li_tau
        if big.any():
            # Newton on the vectorised li from a safe starting point
            t = np.maximum(y[big] * np.log(np.maximum(y[big], 3.0)), self.tau)
            for _ in range(100):
                step = (self.psi_values(t) - y[big]) * np.log(t)
                t = np.maximum(t - step, self.tau)
                if np.all(np.abs(step) <= 1e-13 * t):
                    break
            out[big] = t
        return out

    def to_json(self) -> dict:
        return {"variant": "li_profile", "tau": self.tau}


PsiApprox = PiecewiseStar | LiProfile


def psi_from_json(data: dict) -> PsiApprox:
    if data["variant"] == "li_profile":
        return LiProfile(float(data["tau"]))
    if data["variant"] == "piecewise_star":
        vals = [Fraction(v) for v in data["values"]]
        den = math.lcm(*(v.denominator for v in vals))
        cum = np.array([int(v * den) for v in vals], dtype=object)
        if abs(int(cum[-1])) < 2**62:
            cum = cum.astype(np.int64)
        return PiecewiseStar(np.array(data["breakpoints"], dtype=np.int64), cum, den)
    raise ValueError(f"unknown variant {data['variant']!r}")


def evaluate(approx: PsiApprox, x):
    return approx.evaluate(x)


def inverse(approx: PsiApprox, y):
    return approx.inverse(y)


def z_map(approx: PsiApprox, X, xi):
    """z(xi) = Psi^{-1}(Psi(X) xi) / X; vectorised when xi is an array."""
    if isinstance(xi, np.ndarray):
        if np.any((xi < 0) | (xi > 1)):
            raise ValueError("xi must lie in [0, 1]")
        total = float(approx.evaluate(X)[0])
        return approx.inverse_values(total * xi) / float(X)
    if not 0 <= xi <= 1:
        raise ValueError("xi must lie in [0, 1]")
    total = approx.evaluate(X)[0]
    return approx.inverse(total * xi) / X


# ----------------------------------------------------------------------------
# the rescaled measure on [0, 1]
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledMeasure:
    """Pushforward of d(xi) on [0, 1] under z, written as rho(z) dz.

    ``edges`` partition [0, z_max] into pieces on which rho is smooth, so that
    Gauss panels never straddle a kink.
    """

    approx: PsiApprox
    X: float
    edges: np.ndarray
    total: float

    def density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if isinstance(self.approx, PiecewiseStar):
            e, d = self.approx.density_pieces()
            idx = np.clip(np.searchsorted(e, z * self.X, side="right") - 1, 0, len(d) - 1)
            out = d[idx] * self.X / self.total
            out[z * self.X >= e[-1]] = 0.0
            return out
        return self.approx.density(z * self.X) * self.X / self.total

    def sample(self, u: np.ndarray) -> np.ndarray:
        return z_map(self.approx, self.X, np.asarray(u, dtype=float))

    def cdf(self, z: np.ndarray) -> np.ndarray:
        z = np.clip(np.asarray(z, dtype=float), 0.0, None)
        return np.minimum(self.approx.psi_values(z * self.X) / self.total, 1.0)

    @property
    def z_max(self) -> float:
        return float(self.edges[-1])


def scaled_measure(approx: PsiApprox, X) -> ScaledMeasure:
    X = float(X)
    total = float(approx.evaluate(X)[0])
    if total <= 0:
        raise ValueError("Psi(X) must be positive")
    if isinstance(approx, PiecewiseStar):
        e, _ = approx.density_pieces()
        e = e[e < X]
        edges = np.append(e, min(X, approx.x_max)) / X
    else:
        edges = np.array([0.0, approx.tau / X, 1.0]) if approx.tau < X else np.array([0.0, 1.0])
    return ScaledMeasure(approx, X, edges, total)


# ----------------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------------


@dataclass
class ApproximationError:
    sup: float
    argmax: int
    max_weight: Fraction | None
    values: list[tuple[int, float]]


def approximation_error(A: WeightedSet, approx: PsiApprox, grid: Sequence[int]) -> ApproximationError:
    grid = [int(x) for x in grid]
    if not grid:
        raise ValueError("empty grid")
    vals = []
    for X in grid:
        a = A.count_up_to(X)
        if isinstance(approx, PiecewiseStar):
            diff = float(abs(a - approx.evaluate(X)[0]))
        else:
            diff = abs(float(a) - approx.evaluate(X)[0])
        vals.append((X, diff))
    X_star, sup = max(vals, key=lambda t: (t[1], -t[0]))
    mw = A.max_weight() if isinstance(approx, PiecewiseStar) else None
    return ApproximationError(sup, X_star, mw, vals)
