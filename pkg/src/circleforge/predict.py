"""Predicted main terms, applicability bookkeeping and exact-vs-predicted comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .arith import RHO0_TABLE, is_prime, rho0

THEOREMS = ("Waring", "Mixed", "MeanValue", "PrimeWaring")


class ModeMismatch(ValueError):
    """Series or integral computed in a different variant than the theorem needs."""


class MissingMeasurement(KeyError):
    """An applicability check needs a measurement that was not supplied."""


# ----------------------------------------------------------------------------
# main terms
# ----------------------------------------------------------------------------


@dataclass
class PredictionReport:
    theorem: str
    point: float  # n for the Waring variants, X for mean values
    main_term: float
    A_value: float
    series: float
    series_Q: float | None
    integral: float
    integral_Q: float | None
    s: int
    k: int | None = None
    u: int = 0
    K: int | None = None
    exact: float | None = None
    confidence: float | None = None

    @property
    def ratio(self) -> float | None:
        if self.exact is None:
            return None
        return _ratio(self.exact, self.main_term)

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "point": self.point,
            "mainTerm": self.main_term,
            "constituents": {
                "A": self.A_value,
                "series": {"value": self.series, "Q": self.series_Q},
                "integral": {"value": self.integral, "Q": self.integral_Q},
            },
            "s": self.s,
            "k": self.k,
            "u": self.u,
            "K": self.K,
            "exact": self.exact,
            "ratio": self.ratio,
            "tailExponent": self.confidence,
        }


def _ratio(exact: float, predicted: float) -> float:
    if predicted == 0:
        return math.inf if exact > 0 else 1.0
    return exact / predicted


def main_term(
    theorem: str,
    *,
    A_value: float,
    series: float,
    integral: float,
    s: int,
    k: int | None = None,
    u: int = 0,
    K: int | None = None,
    n: float | None = None,
    X: float | None = None,
    series_Q: float | None = None,
    integral_Q: float | None = None,
    series_mode: str | None = None,
    integral_mode: str | None = None,
    tail_exponents: Sequence[float | None] = (),
) -> PredictionReport:
    """Main term per theorem.

    Waring: A(n^{1/k})^s n^{-1} S J.  Mixed: A(n^{1/k})^s n^{u/k-1} S J.
    MeanValue: A(X)^{2s} X^{-K} S J.  ``A_value`` is A(n^{1/k}) or A(X).
    """
    if theorem not in ("Waring", "Mixed", "MeanValue"):
        raise ValueError(f"unknown theorem {theorem!r}")
    expected = {"Waring": "Waring", "Mixed": "Mixed", "MeanValue": "MeanValue"}[theorem]
    for got in (series_mode, integral_mode):
        if got is not None and got != expected:
            raise ModeMismatch(f"{theorem} needs {expected}-mode constituents, got {got}")
    if theorem == "MeanValue":
        if X is None or K is None:
            raise ValueError("mean-value main term needs X and K")
        point = float(X)
        mt = float(A_value) ** (2 * s) * point ** (-K) * series * integral
    else:
        if n is None or k is None:
            raise ValueError("Waring main terms need n and k")
        point = float(n)
        uu = u if theorem == "Mixed" else 0
        mt = float(A_value) ** s * point ** (uu / k - 1) * series * integral
    fits = [t for t in tail_exponents if t is not None]
    return PredictionReport(
        theorem, point, mt, float(A_value), float(series), series_Q, float(integral), integral_Q,
        s, k, u, K, confidence=min(fits) if fits else None,
    )


def gamma_ratio(k: int, s: int) -> float:
    """Gamma(1/k)^s / Gamma(s/k), through log-gamma for stability."""
    return math.exp(s * math.lgamma(1.0 / k) - math.lgamma(s / k))


def prime_main_term(k: int, s: int, n: float, series: float) -> float:
    """Gamma(1/k)^s / Gamma(s/k) * S_P(n) * n^{s/k-1} / (log n)^s."""
    if n < 3:
        raise ValueError("n must be at least 3")
    if s < 1 or k < 1:
        raise ValueError("s and k must be positive")
    return gamma_ratio(k, s) * series * n ** (s / k - 1) / math.log(n) ** s


# ----------------------------------------------------------------------------
# Y(X) and applicability
# ----------------------------------------------------------------------------


@dataclass
class YReport:
    variant: str
    value: float
    branches: dict[str, float]
    binding: str


def compute_Y(Q_D: float, Q_W: float | None, A_X: float, E: float, X: float, r: int = 1, variant: str = "Y") -> YReport:
    """Y(X) as the minimum of its branches.

    ``variant`` "Y": {Q_D, Q_W, (A/E)^{1/5}, X^{1/5}}; "Y2": drops Q_W;
    "Ymv": exponents 1/(2r+3) (equal to "Y" when r = 1).
    """
    if min(Q_D, A_X, E, X) <= 0 or (Q_W is not None and Q_W <= 0):
        raise ValueError("inputs must be positive")
    if variant == "Y":
        e = 1 / 5
    elif variant == "Y2":
        e = 1 / 5
    elif variant == "Ymv":
        e = 1 / (2 * r + 3)
    else:
        raise ValueError(f"unknown Y variant {variant!r}")
    branches = {"Q_D": float(Q_D)}
    if variant != "Y2":
        if Q_W is None:
            raise ValueError("Q_W is required for this variant")
        branches["Q_W"] = float(Q_W)
    branches["A/E"] = (A_X / E) ** e
    branches["X"] = float(X) ** e
    binding = min(branches, key=lambda b: branches[b])
    return YReport(variant, branches[binding], branches, binding)


@dataclass
class Check:
    name: str
    lhs: float
    op: str
    rhs: float
    passed: bool

    def text(self) -> str:
        return f"{self.name}: {self.lhs:.6g} {self.op} {self.rhs:.6g} -> {'pass' if self.passed else 'fail'}"


@dataclass
class Verdict:
    theorem: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "verdict": "pass" if self.passed else "fail",
            "checks": [
                {"name": c.name, "lhs": c.lhs, "op": c.op, "rhs": c.rhs, "passed": c.passed, "text": c.text()}
                for c in self.checks
            ],
        }


_OPS = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
}


def _need(m: Mapping, *keys):
    missing = [k for k in keys if m.get(k) is None]
    if missing:
        raise MissingMeasurement(f"missing measurement(s): {', '.join(missing)}")
    return [m[k] for k in keys]


def _check(name, lhs, op, rhs) -> Check:
    return Check(name, float(lhs), op, float(rhs), bool(_OPS[op](lhs, rhs)))


def applicability(theorem: str, m: Mapping) -> Verdict:
    """Evaluate the displayed hypotheses with measured proxies substituted.

    Theorems: "Waring" (s > 2 t0 + sigma0), "Mixed" (s >= 2 t0, u > sigma0),
    "MeanValue" (2s > 2 t0 + sigma0), "SmallDensityA", "SmallDensityB"
    (needs a user-supplied constant C), "Ellipsephic".
    """
    v = Verdict(theorem)
    if theorem == "Waring":
        s, t0, sig = _need(m, "s", "t0", "sigma0")
        v.checks.append(_check("s > 2t0 + sigma0", s, ">", 2 * t0 + sig))
    elif theorem == "Mixed":
        s, u, t0, sig = _need(m, "s", "u", "t0", "sigma0")
        v.checks.append(_check("s >= 2t0", s, ">=", 2 * t0))
        v.checks.append(_check("u > sigma0", u, ">", sig))
    elif theorem == "MeanValue":
        s, t0, sig = _need(m, "s", "t0", "sigma0")
        v.checks.append(_check("2s > 2t0 + sigma0", 2 * s, ">", 2 * t0 + sig))
    elif theorem == "SmallDensityA":
        k, s, lam = _need(m, "k", "s", "lambda")
        r0k, r0k1 = rho0(k), rho0(k + 1)
        v.checks.append(_check("1/lambda < 1 + rho0(k) rho0(k+1)/5", 1 / lam, "<", 1 + r0k * r0k1 / 5))
        v.checks.append(_check("s >= 1/rho0(k+1) + 1", s, ">=", 1 / r0k1 + 1))
    elif theorem == "SmallDensityB":
        k, s, lam, C, convex = _need(m, "k", "s", "lambda", "C", "convex")
        v.checks.append(_check("1/lambda < 1 + rho0(k)/(10k)", 1 / lam, "<", 1 + rho0(k) / (10 * k)))
        v.checks.append(_check("gaps non-decreasing", 1.0 if convex else 0.0, ">=", 1.0))
        v.checks.append(_check("s >= C 2^k log k", s, ">=", C * 2**k * math.log(k)))
    elif theorem == "Ellipsephic":
        k, s, lam, mm, p = _need(m, "k", "s", "lambda", "m", "p")
        v.checks.append(_check("p prime and p > k", 1.0 if (is_prime(p) and p > k) else 0.0, ">=", 1.0))
        if m.get("sidon") is not None:
            v.checks.append(_check("digit set is B_m Sidon", 1.0 if m["sidon"] else 0.0, ">=", 1.0))
        v.checks.append(_check("m > 1/lambda - 2 rho0/(5k(k+1))", mm, ">", 1 / lam - 2 * rho0(k) / (5 * k * (k + 1))))
        v.checks.append(_check("s >= 2t0 = m k(k+1)", s, ">=", mm * k * (k + 1)))
    else:
        raise ValueError(f"unknown theorem {theorem!r}")
    return v


# ----------------------------------------------------------------------------
# comparison
# ----------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    n: np.ndarray
    exact: np.ndarray
    predicted: np.ndarray
    ratio: np.ndarray
    window: int
    windowed: np.ndarray
    mean_ratio: float
    max_deviation: float
    flags: list[str]

    def to_csv(self) -> str:
        rows = ["n,exact,predicted,ratio"]
        for n, e, p, r in zip(self.n, self.exact, self.predicted, self.ratio):
            rows.append(f"{int(n)},{_num(e)},{_num(p)},{_num(r)}")
        return "\n".join(rows) + "\n"

    def to_json(self) -> dict:
        return {
            "window": self.window,
            "meanRatio": self.mean_ratio,
            "maxDeviation": self.max_deviation,
            "windowedMeans": [float(x) for x in self.windowed],
            "residual": self.mean_ratio - 1.0,
            "flags": self.flags,
            "points": [
                {"n": int(n), "exact": float(e), "predicted": float(p), "ratio": float(r)}
                for n, e, p, r in zip(self.n, self.exact, self.predicted, self.ratio)
            ],
        }


def _num(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def compare(n: Sequence[int], exact: Sequence[float], predicted: Sequence[float], window: int = 10) -> ComparisonReport:
    """Per-point ratios, windowed means over consecutive points and the overall mean."""
    n = np.asarray(n)
    if len(n) == 0:
        raise ValueError("empty overlap between exact and predicted ranges")
    order = np.argsort(n, kind="stable")
    n = n[order]
    e = np.asarray(exact, dtype=float)[order]
    p = np.asarray(predicted, dtype=float)[order]
    ratio = np.array([_ratio(a, b) for a, b in zip(e, p)])
    flags = [f"n={int(x)}: local obstruction mismatch" for x, b, a in zip(n, p, e) if b == 0 and a > 0]
    ok = np.isfinite(ratio)
    w = max(1, min(window, int(ok.sum()) or 1))
    good = ratio[ok]
    windowed = np.convolve(good, np.ones(w) / w, mode="valid") if len(good) else np.array([])
    mean = float(good.mean()) if len(good) else math.nan
    dev = float(np.max(np.abs(good - 1.0))) if len(good) else math.nan
    return ComparisonReport(n, e, p, ratio, w, windowed, mean, dev, flags)


__all__ = [
    "RHO0_TABLE",
    "THEOREMS",
    "PredictionReport",
    "main_term",
    "gamma_ratio",
    "prime_main_term",
    "compute_Y",
    "applicability",
    "compare",
    "ComparisonReport",
    "Verdict",
    "YReport",
    "ModeMismatch",
    "MissingMeasurement",
]
