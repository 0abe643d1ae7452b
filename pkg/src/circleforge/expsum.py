"""Exponential sums and integrals, arc geometry, and Weyl-exponent fits.

Sums over a weighted set are evaluated with their phases reduced modulo 1 in
exact integer arithmetic before any trigonometric function is applied; the
oscillatory integrals v and w use fixed Gauss-Legendre panels that resolve
every oscillation of the phase and are refined until two levels agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .arith import powmod_array
from .psi import LiProfile, PiecewiseStar, PsiApprox, ScaledMeasure, scaled_measure
from .sets import DistributionProfile, WeightedSet

TWO_PI = 2.0 * math.pi
QUAD_TOL = 1e-10
GAUSS_NODES = 16
MAX_PANELS = 1 << 20


class QuadratureError(RuntimeError):
    """Panel refinement reached its cap without meeting the tolerance."""


# ----------------------------------------------------------------------------
# polynomial systems
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PolySystem:
    """Diagonal system phi_j(x) = c_j x^{k_j} with strictly increasing k_j."""

    terms: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("empty system")
        ks = [k for _, k in self.terms]
        if any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("degrees must be positive and strictly increasing")
        if any(c == 0 for c, _ in self.terms):
            raise ValueError("coefficients must be nonzero")

    @classmethod
    def monomial(cls, k: int, c: int = 1) -> "PolySystem":
        return cls(((int(c), int(k)),))

    @classmethod
    def of(cls, terms: Iterable) -> "PolySystem":
        out = []
        for t in terms:
            if isinstance(t, int):
                out.append((1, t))
            else:
                c, k = t
                out.append((int(c), int(k)))
        return cls(tuple(out))

    @property
    def r(self) -> int:
        return len(self.terms)

    @property
    def K(self) -> int:
        return sum(k for _, k in self.terms)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(k for _, k in self.terms)

    @property
    def coeffs(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.terms)

    @property
    def k_max(self) -> int:
        return self.terms[-1][1]

    def values(self, x) -> np.ndarray:
        """Float array of shape (r, len(x))."""
        x = np.asarray(x, dtype=float)
        return np.stack([c * x**k for c, k in self.terms])

    def residues(self, x: np.ndarray, q: int) -> np.ndarray:
        """phi_j(x) mod q as an integer array of shape (r, len(x))."""
        return np.stack([(powmod_array(x, k, q) * (c % q)) % q for c, k in self.terms])

    def sup_abs_unit(self) -> float:
        """max_j sup_{[0,1]} |phi_j|."""
        return float(max(abs(c) for c in self.coeffs))

    def to_json(self) -> list:
        return [[c, k] for c, k in self.terms]


def _as_vector(alpha, r: int) -> list:
    if isinstance(alpha, (int, float, Fraction)):
        alpha = [alpha]
    alpha = list(alpha)
    if len(alpha) != r:
        raise ValueError(f"expected {r} frequencies, got {len(alpha)}")
    return alpha


# ----------------------------------------------------------------------------
# Weyl sums
# ----------------------------------------------------------------------------


def _weights_float(A: WeightedSet, count: int) -> np.ndarray:
    return np.array([int(v) for v in A.numer[:count]], dtype=float) / A.denom


def exact_phases(support: np.ndarray, phi: PolySystem, alpha: Sequence) -> np.ndarray:
    """Fractional parts of alpha . phi(x), reduced exactly before conversion."""
    fr = [Fraction(a) for a in alpha]
    D = math.lcm(*(f.denominator for f in fr))
    nums = [f.numerator * (D // f.denominator) for f in fr]
    if D < 2**31 and all(abs(n) < 2**31 for n in nums):
        acc = np.zeros(len(support), dtype=np.int64)
        for n, (c, k) in zip(nums, phi.terms):
            term = powmod_array(support, k, D) * ((n * c) % D) % D
            acc = (acc + term) % D
        return acc.astype(float) / D
    out = np.empty(len(support), dtype=float)
    for i, x in enumerate(support.tolist()):
        s = 0
        for n, (c, k) in zip(nums, phi.terms):
            s += n * c * pow(x, k, D)
        out[i] = Fraction(s % D, D).__float__()
    return out


def weyl_sum(A: WeightedSet, phi: PolySystem, alpha, X=None) -> complex:
    """f(alpha; X) = sum_{x <= X} a_x e(alpha . phi(x)), by direct summation."""
    X = A.bound if X is None else X
    if X > A.bound:
        raise ValueError(f"X={X} exceeds materialised bound {A.bound}")
    alpha = _as_vector(alpha, phi.r)
    i = int(np.searchsorted(A.support, int(math.floor(X)), side="right"))
    sup = A.support[:i]
    if not i:
        return 0j
    w = _weights_float(A, i)
    ph = exact_phases(sup, phi, alpha)
    return complex(np.sum(w * np.exp(1j * TWO_PI * ph)))


def weyl_sum_float(A: WeightedSet, phi: PolySystem, alphas: np.ndarray, X=None) -> np.ndarray:
    """Vectorised f at many float frequencies (r=1); used only by searches."""
    X = A.bound if X is None else X
    i = int(np.searchsorted(A.support, int(math.floor(X)), side="right"))
    c, k = phi.terms[0]
    xs = A.support[:i].astype(np.float64)
    w = _weights_float(A, i)
    out = np.empty(len(alphas), dtype=complex)
    powers = c * xs**k
    for j0 in range(0, len(alphas), 256):
        a = np.asarray(alphas[j0 : j0 + 256], dtype=float)[:, None]
        ph = np.mod(a * powers, 1.0)
        out[j0 : j0 + 256] = np.exp(1j * TWO_PI * ph) @ w
    return out


def weyl_on_rationals(A: WeightedSet, phi: PolySystem, q: int, X=None) -> np.ndarray:
    """f(a/q) for every a mod q (r=1), via the residue histogram and one FFT."""
    X = A.bound if X is None else X
    i = int(np.searchsorted(A.support, int(math.floor(X)), side="right"))
    res = phi.residues(A.support[:i], q)[0]
    hist = np.bincount(res, weights=_weights_float(A, i), minlength=q)
    return q * np.fft.ifft(hist)


def weyl_grid(A: WeightedSet, phi: PolySystem, N: int, X=None) -> np.ndarray:
    """f(j/N) for j = 0..N-1 (r=1)."""
    return weyl_on_rationals(A, phi, N, X)


# ----------------------------------------------------------------------------
# complete sums
# ----------------------------------------------------------------------------


def _kappa_table(profile, q: int) -> np.ndarray:
    if profile is None:
        return np.full(q, 1.0 / q)
    num, den = profile.int_table(q)
    return np.array([int(v) for v in num], dtype=float) / den


def complete_sum(profile: DistributionProfile | None, phi: PolySystem, q: int, b) -> complex:
    """S_A(q, b) = sum_l kappa(q, l) e(b . phi(l) / q); profile None is kappa = 1/q."""
    b = [int(v) % q for v in _as_vector(b, phi.r)]
    kap = _kappa_table(profile, q)
    ell = np.arange(q, dtype=np.int64)
    res = phi.residues(ell, q)
    num = np.zeros(q, dtype=np.int64)
    for bj, rj in zip(b, res):
        num = (num + bj * rj) % q
    return complex(np.sum(kap * np.exp(1j * TWO_PI * num / q)))


def complete_sums_all(profile: DistributionProfile | None, phi: PolySystem, q: int) -> np.ndarray:
    """S_A(q, b) for every b in (Z/q)^r, as an array of shape (q,)*r."""
    kap = _kappa_table(profile, q)
    res = phi.residues(np.arange(q, dtype=np.int64), q)
    hist = np.zeros((q,) * phi.r)
    np.add.at(hist, tuple(res), kap)
    return np.fft.ifftn(hist) * q**phi.r


# ----------------------------------------------------------------------------
# oscillatory quadrature
# ----------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def panel_nodes(edges: np.ndarray, counts: np.ndarray, n: int = GAUSS_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights for pieces [edges[i], edges[i+1]] split into counts[i] panels."""
    t, w = _gauss(n)
    lo = np.repeat(edges[:-1], counts)
    width = np.repeat((edges[1:] - edges[:-1]) / counts, counts)
    idx = np.concatenate([np.arange(c) for c in counts]) if len(counts) else np.array([], dtype=int)
    a = lo + idx * width
    half = width / 2.0
    nodes = (a + half)[:, None] + half[:, None] * t[None, :]
    wts = half[:, None] * w[None, :]
    return nodes.ravel(), wts.ravel()


def _panel_counts(edges: np.ndarray, freq: Sequence[tuple[float, int]], min_total: int, scale: float) -> np.ndarray:
    """Panels per piece: >= 8 per oscillation and a floor of min_total overall."""
    span = edges[-1] - edges[0]
    counts = np.ceil(min_total * (edges[1:] - edges[:-1]) / span)
    var = np.zeros(len(edges) - 1)
    for f, k in freq:
        var += abs(f) * (edges[1:] ** k - edges[:-1] ** k)
    counts = np.maximum(counts, np.ceil(8.0 * var * scale))
    return np.maximum(counts, 1).astype(np.int64)


@dataclass
class QuadResult:
    value: complex
    panels: int
    change: float


def oscillatory_integral(
    edges: np.ndarray,
    density,
    freq: Sequence[tuple[float, int]],
    *,
    min_panels: int = 64,
    tol: float = QUAD_TOL,
    max_panels: int = MAX_PANELS,
) -> QuadResult:
    """int density(t) e(sum_j f_j t^{k_j}) dt over [edges[0], edges[-1]].

    ``density`` is smooth on each piece.  The panel layout is doubled until two
    successive levels agree to ``tol`` (absolute, relative to the mass scale).
    """
    edges = np.asarray(edges, dtype=float)
    counts = _panel_counts(edges, freq, min_panels, 1.0)
    if 2 * counts.sum() > max_panels:
        raise QuadratureError(f"oscillatory quadrature needs more than {max_panels} panels")

    def run(cnt):
        x, w = panel_nodes(edges, cnt)
        ph = np.zeros_like(x)
        for f, k in freq:
            ph += f * x**k
        return np.sum(w * density(x) * np.exp(1j * TWO_PI * np.mod(ph, 1.0)))

    prev = run(counts)
    x0, w0 = panel_nodes(edges, counts)
    mass = max(1.0, float(np.sum(np.abs(w0 * density(x0)))))
    while True:
        counts = counts * 2
        if counts.sum() > max_panels:
            raise QuadratureError(f"oscillatory quadrature did not reach tol {tol} within {max_panels} panels")
        cur = run(counts)
        change = abs(cur - prev)
        if change <= tol * mass:
            return QuadResult(complex(cur), int(counts.sum()), float(change))
        prev = cur


def v_integral(approx: PsiApprox, phi: PolySystem, beta, X) -> complex:
    """v(beta; X) = int_0^X psi(t) e(beta . phi(t)) dt, in the original variable."""
    beta = [float(b) for b in _as_vector(beta, phi.r)]
    X = float(X)
    if all(b == 0 for b in beta):
        return complex(float(approx.evaluate(X)[0]))
    if isinstance(approx, PiecewiseStar):
        e, d = approx.density_pieces()
        keep = e < X
        edges = np.append(e[keep], min(X, float(approx.x_max)))
        if edges[-1] <= edges[0]:
            return 0j

        def density(t):
            idx = np.clip(np.searchsorted(e, t, side="right") - 1, 0, len(d) - 1)
            return d[idx]

    else:
        edges = np.array([0.0, approx.tau, X]) if approx.tau < X else np.array([0.0, X])
        density = approx.density
    freq = [(b * c, k) for b, (c, k) in zip(beta, phi.terms)]
    return oscillatory_integral(edges, density, freq, min_panels=64, tol=QUAD_TOL).value


def w_integral(approx: PsiApprox | ScaledMeasure, phi: PolySystem, gamma, X=None) -> complex:
    """w(gamma) = int_0^1 e(gamma . phi(z(xi))) d xi, computed in the z variable."""
    gamma = [float(g) for g in _as_vector(gamma, phi.r)]
    if all(g == 0 for g in gamma):
        return 1.0 + 0j
    m = approx if isinstance(approx, ScaledMeasure) else scaled_measure(approx, X)
    freq = [(g * c, k) for g, (c, k) in zip(gamma, phi.terms)]
    return oscillatory_integral(m.edges, m.density, freq, min_panels=64, tol=QUAD_TOL).value


@dataclass
class WTable:
    """Fixed quadrature layout able to evaluate w at many gammas (r=1)."""

    nodes: np.ndarray
    weights: np.ndarray  # Gauss weight times density
    powers: np.ndarray  # phi(z) at the nodes
    gamma_max: float

    def __call__(self, gammas: np.ndarray, chunk: int = 512) -> np.ndarray:
        g = np.asarray(gammas, dtype=float)
        out = np.empty(g.shape, dtype=complex)
        flat = g.ravel()
        res = out.ravel()
        for j in range(0, len(flat), chunk):
            ph = np.mod(np.outer(flat[j : j + chunk], self.powers), 1.0)
            res[j : j + chunk] = np.exp(1j * TWO_PI * ph) @ self.weights
        res[flat == 0] = 1.0
        return res.reshape(g.shape)


def w_table(measure: ScaledMeasure, phi: PolySystem, gamma_max: float, tol: float = QUAD_TOL) -> WTable:
    """Build a node set that resolves w(gamma) for all |gamma| <= gamma_max (r=1)."""
    if phi.r != 1:
        raise ValueError("w_table handles single-term systems")
    c, k = phi.terms[0]
    freq = [(abs(c) * gamma_max, k)]
    counts = _panel_counts(measure.edges, freq, 64, 1.0)
    if 2 * counts.sum() > MAX_PANELS:
        raise QuadratureError("w table needs more panels than the cap allows")
    probe = np.array([gamma_max, gamma_max * 0.5, gamma_max * 0.25])

    def build(cnt):
        x, w = panel_nodes(measure.edges, cnt)
        return WTable(x, w * measure.density(x), c * x**k, gamma_max)

    prev = build(counts)
    while True:
        counts = counts * 2
        if counts.sum() > MAX_PANELS:
            raise QuadratureError("w table did not converge")
        cur = build(counts)
        if np.max(np.abs(cur(probe) - prev(probe))) <= tol:
            return cur
        prev = cur


# ----------------------------------------------------------------------------
# arcs
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ArcParams:
    X: float
    Q: float
    degrees: tuple[int, ...]

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be >= 1")

    @property
    def disjoint(self) -> bool:
        """Sufficient condition 2Q^2 <= X^{k_1} for disjoint major arcs."""
        return 2 * self.Q**2 <= self.X ** self.degrees[0]


@dataclass
class ArcPoint:
    major: bool
    alpha: tuple
    q: int | None = None
    b: tuple[int, ...] | None = None
    beta: tuple[float, ...] | None = None
    gcd: int | None = None


def _frac(a) -> Fraction:
    return a if isinstance(a, Fraction) else Fraction(a)


def arc_membership(alpha, params: ArcParams, mode: str = "N") -> ArcPoint:
    """Least q <= Q approximating alpha on the major arcs M (r=1) or N."""
    r = len(params.degrees)
    alpha = [_frac(a) for a in _as_vector(alpha, r)]
    X = _frac(params.X)
    Q = _frac(params.Q)
    if mode not in ("M", "N"):
        raise ValueError("mode must be 'M' or 'N'")
    if mode == "M" and r != 1:
        raise ValueError("mode M is defined for a single frequency")
    qmax = int(math.floor(Q))
    for q in range(1, qmax + 1):
        braw = [round(a * q) for a in alpha]
        if mode == "M":
            ok = abs(alpha[0] * q - braw[0]) <= Q / X ** params.degrees[0]
        else:
            ok = all(abs(a - br / q) <= Q / X**k for a, br, k in zip(alpha, braw, params.degrees))
        if ok:
            beta = tuple(float(a - br / Fraction(q)) for a, br in zip(alpha, braw))
            b = tuple(br % q for br in braw)
            return ArcPoint(True, tuple(alpha), q, b, beta, math.gcd(q, *b))
    return ArcPoint(False, tuple(alpha))


def _is_minor_float(alpha: np.ndarray, X: float, Q: float, k: int) -> np.ndarray:
    minor = np.ones(alpha.shape, dtype=bool)
    thr = Q * float(X) ** (-k)
    for q in range(1, int(Q) + 1):
        t = alpha * q
        minor &= np.abs(t - np.rint(t)) > thr
    return minor


@dataclass
class SupResult:
    sup: float
    argmax: float
    points: int
    grid: int
    lower_bound: bool = True
    experimental: bool = False


def _golden_max(fun, a: float, b: float, iters: int = 40) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    return (c, fc) if fc > fd else (d, fd)


def minor_arc_sup(
    A: WeightedSet,
    phi: PolySystem,
    X,
    Q,
    *,
    density_factor: float = 4.0,
    rational_factor: int = 8,
    refine_top: int = 8,
    seed: int = 0,
) -> SupResult:
    """Lower-bound estimate of sup |f| over the minor arcs m_X(Q).

    Candidates: an FFT grid with at least 4 Q X^{k-1} points, every reduced
    a/q with Q < q <= 8Q, and points just outside each major arc; the best
    candidates are refined by golden-section ascent inside the minor arcs.
    """
    X = int(X)
    if phi.r != 1:
        return _minor_arc_sup_multi(A, phi, X, Q, seed=seed)
    c, k = phi.terms[0]
    if Q * Q >= X**k:
        raise ValueError(f"minor arcs are empty: Q^2 = {Q * Q} >= X^k = {X**k}")
    thr = Q / X**k
    N = int(math.ceil(density_factor * Q * X ** (k - 1)))
    cand_a: list[np.ndarray] = []
    cand_v: list[np.ndarray] = []

    vals = np.abs(weyl_grid(A, phi, N, X))
    grid = np.arange(N) / N
    cand_a.append(grid)
    cand_v.append(vals)
    for q in range(int(Q) + 1, int(rational_factor * Q) + 1):
        a = np.arange(q)
        red = np.gcd(a, q) == 1
        cand_a.append(a[red] / q)
        cand_v.append(np.abs(weyl_on_rationals(A, phi, q, X))[red])
    edges = []
    for q in range(1, int(Q) + 1):
        for a in range(q):
            if math.gcd(a, q) != 1:
                continue
            for sgn in (-1, 1):
                edges.append((a / q + sgn * thr / q * (1 + 1e-9)) % 1.0)
    edges = np.array(edges)
    cand_a.append(edges)
    cand_v.append(np.abs(weyl_sum_float(A, phi, edges, X)))

    alphas = np.concatenate(cand_a)
    values = np.concatenate(cand_v)
    minor = _is_minor_float(alphas, X, Q, k)
    alphas, values = alphas[minor], values[minor]
    order = np.argsort(-values)
    best_v, best_a = float(values[order[0]]), float(alphas[order[0]])

    step = 1.0 / N
    fun = lambda a: float(abs(weyl_sum_float(A, phi, np.array([a % 1.0]), X)[0])) if _is_minor_float(np.array([a % 1.0]), X, Q, k)[0] else -1.0
    for j in order[:refine_top]:
        a0 = float(alphas[j])
        a1, v1 = _golden_max(fun, a0 - step, a0 + step)
        if v1 > best_v:
            best_v, best_a = v1, a1 % 1.0
    return SupResult(best_v, best_a, int(len(alphas)), N)


def _minor_arc_sup_multi(A, phi, X, Q, *, seed: int = 0, samples: int = 4096) -> SupResult:
    rng = np.random.default_rng(seed)
    best_v, best_a = -1.0, None
    params = ArcParams(X, Q, phi.degrees)
    for _ in range(samples):
        a = rng.random(phi.r)
        if arc_membership(list(a), params, "N").major:
            continue
        v = abs(weyl_sum(A, phi, [Fraction(float(t)) for t in a], X))
        if v > best_v:
            best_v, best_a = v, tuple(a)
    return SupResult(best_v, best_a, samples, 0, True, True)


# ----------------------------------------------------------------------------
# Weyl exponent
# ----------------------------------------------------------------------------


@dataclass
class RhoFit:
    rho: float
    intercept: float
    residual_max: float
    residuals: list[float]


def fit_rho(table: Sequence[tuple[float, float]], A_X: float) -> RhoFit:
    """Least-squares rho in sup ~ A(X) Q^{-rho} C."""
    Qs = np.array([float(Q) for Q, _ in table])
    sups = np.array([float(s) for _, s in table])
    if len(np.unique(Qs)) < 3:
        raise ValueError("need at least three distinct Q values")
    if np.any(sups <= 0):
        raise ValueError("sup values must be positive")
    x = np.log(Qs)
    y = np.log(sups / float(A_X))
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    rho = -slope
    if abs(rho) < 1e-14:
        rho = 0.0
    return RhoFit(float(rho), float(intercept), float(np.max(np.abs(res))), res.tolist())


# ----------------------------------------------------------------------------
# major-arc approximation
# ----------------------------------------------------------------------------


@dataclass
class MajorArcError:
    measured: float
    bound: float
    ratio: float
    q: int
    b: tuple[int, ...]
    beta: tuple[float, ...]


def major_arc_approx_error(
    A: WeightedSet,
    profile: DistributionProfile,
    approx: PsiApprox,
    phi: PolySystem,
    alpha,
    X,
    Q,
) -> MajorArcError:
    """|f - S_A(q,b) v(beta)| against (1 + sum |beta_j| X^{k_j})(q E + A/X)."""
    pt = arc_membership(alpha, ArcParams(X, Q, phi.degrees), "N")
    if not pt.major:
        raise ValueError("alpha is not on the major arcs N(Q)")
    if pt.q > profile.level:
        raise ValueError(f"q={pt.q} exceeds the profiled level {profile.level}")
    f = weyl_sum(A, phi, pt.alpha, X)
    S = complete_sum(profile, phi, pt.q, pt.b)
    v = v_integral(approx, phi, pt.beta, X)
    measured = abs(f - S * v)
    E = float(profile.error_bound[pt.q])
    AX = float(A.count_up_to(X))
    size = 1.0 + sum(abs(b) * float(X) ** k for b, k in zip(pt.beta, phi.degrees))
    bound = size * (pt.q * E + AX / float(X))
    return MajorArcError(measured, bound, measured / bound if bound else math.inf, pt.q, pt.b, pt.beta)
