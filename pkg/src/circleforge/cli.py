"""Command-line front door: ``circleforge <subcommand> [--config PATH] [--set K=V] ...``.

Exit codes: 0 success, 2 configuration/schema error, 3 numeric
non-convergence (partial report kept), 4 memory budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, canonical, config_hash, load
from .counting import BudgetExceeded, count_mixed, count_representations, estimate_delta, iroot, mean_value
from .expsum import PolySystem, QuadratureError, fit_rho, minor_arc_sup
from .predict import applicability, compare, compute_Y, main_term
from .psi import LiProfile, build_psi_star
from .sets import (
    ClosedFormKappa,
    check_condition_C,
    check_convexity,
    closed_form_kappa,
    estimate_kappa,
    generate_set,
    log_density,
    spec_from_dict,
    spec_to_dict,
)
from .singular import (
    CrossCheckError,
    MeanValue,
    Mixed,
    NonStabilized,
    Waring,
    local_factor,
    schmidt_WT,
    series_values,
    truncated_integral,
    truncated_series,
    waring_series_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_BUDGET = 0, 2, 3, 4
MODULUS_CAP = 4096
COMMANDS = ("set", "dist", "count", "weyl", "singular", "predict", "compare")


class NonConvergence(RuntimeError):
    def __init__(self, message: str, partial: dict):
        super().__init__(message)
        self.partial = partial


# ----------------------------------------------------------------------------
# report emission
# ----------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _float(float(obj))
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _float(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


class Reporter:
    def __init__(self, cfg: dict, command: str, out: Path, fmt: str):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.fmt = fmt
        hashed = {k: v for k, v in cfg.items() if k != "output"}
        self.hash = config_hash(hashed)
        self.files: list[Path] = []

    def header(self) -> dict:
        return {"version": __version__, "configHash": self.hash, "command": self.command, "seed": self.cfg["seed"]}

    def json(self, name: str, payload: dict) -> Path:
        doc = {**self.header(), "config": {k: v for k, v in self.cfg.items() if k != "output"}, "result": payload}
        text = json.dumps(_plain(doc), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"
        return self._write(name, text)

    def csv(self, name: str, body: str) -> Path:
        text = f"# circleforge {__version__} config {self.hash}\n" + body
        return self._write(name, text)

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(path)
        return path

    def emit(self, stem: str, payload: dict, csv_body: str | None) -> None:
        if self.fmt == "csv" and csv_body is not None:
            self.csv(stem + ".csv", csv_body)
        else:
            self.json(stem + ".json", payload)


# ----------------------------------------------------------------------------
# config helpers
# ----------------------------------------------------------------------------


def _phi(cfg) -> PolySystem:
    if cfg.get("phi"):
        return PolySystem.of([tuple(t) for t in cfg["phi"]])
    return PolySystem.monomial(cfg["k"])


def _spec(cfg):
    return spec_from_dict(cfg["set"])


def _set(cfg, X: int | None = None):
    return generate_set(_spec(cfg), X or cfg["X"])


def _ns(cfg) -> list[int]:
    spec = cfg.get("n")
    if not spec:
        raise ConfigError("n: this command needs n.values or n.min/n.max/n.count")
    if spec.get("values"):
        return sorted(set(int(v) for v in spec["values"]))
    try:
        lo, hi, cnt = spec["min"], spec["max"], spec["count"]
    except KeyError as exc:
        raise ConfigError(f"n: missing {exc.args[0]}") from None
    if hi < lo:
        raise ConfigError("n: max < min")
    rng = np.random.default_rng(cfg["seed"])
    cnt = min(cnt, hi - lo + 1)
    return sorted(int(v) for v in rng.choice(np.arange(lo, hi + 1), size=cnt, replace=False))


def _source(cfg, A=None):
    spec = _spec(cfg)
    if closed_form_kappa(spec, 1) is not None:
        try:
            src = ClosedFormKappa(spec)
            for q in range(1, min(cfg["qMax"], 64) + 1):
                src.table(q)
            return src
        except ValueError:
            pass
    A = A if A is not None else _set(cfg)
    return estimate_kappa(A, cfg["qMax"], cfg.get("xGrid"))


def _approx(cfg, A):
    if cfg["psi"] == "li":
        return LiProfile(cfg["tau"])
    return build_psi_star(A)


def _mode(cfg, n: int = 0):
    if cfg["mode"] == "MeanValue":
        return MeanValue(cfg["s"])
    if cfg["mode"] == "Mixed":
        return Mixed(cfg["s"], cfg["u"], n)
    return Waring(cfg["s"], n)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_set(cfg, rep: Reporter) -> None:
    A = _set(cfg)
    rows = "".join(f"{n},{w}\n" for n, w in A.weights.items())
    payload = {
        "spec": spec_to_dict(_spec(cfg)),
        "X": A.bound,
        "size": int(len(A.support)),
        "count": A.count_up_to(A.bound),
        "maxWeight": A.max_weight(),
        "elements": [[n, w] for n, w in A.weights.items()],
    }
    if cfg.get("xGrid") and len(cfg["xGrid"]) >= 2:
        ld = log_density(A, cfg["xGrid"])
        payload["logDensity"] = {"value": ld.value, "trace": ld.trace}
    if len(A.support) >= 3:
        cv = check_convexity(A)
        payload["convex"] = {"holds": cv.holds, "firstViolation": cv.first_violation}
    rep.emit("set", payload, "n,weight\n" + rows)


def cmd_dist(cfg, rep: Reporter) -> None:
    A = _set(cfg)
    prof = estimate_kappa(A, cfg["qMax"], cfg.get("xGrid"))
    pairs = cfg.get("conditionPairs")
    if pairs is None:
        qm = cfg["qMax"]
        pairs = [(q, r) for q in range(2, qm + 1) for r in range(q + 1, qm + 1) if math.gcd(q, r) == 1 and q * r <= qm]
    cc = check_condition_C(prof, [tuple(p) for p in pairs])
    ycfg = cfg.get("Y", {})
    A_X = float(A.count_up_to(A.bound))
    E = ycfg.get("E") or max(1.0, max(float(v) for v in prof.error_bound.values()))
    Y = compute_Y(ycfg.get("QD", cfg["qMax"]), ycfg.get("QW", A.bound), A_X, E, A.bound, ycfg.get("r", 1), ycfg.get("variant", "Y"))
    payload = {
        "mode": prof.mode,
        "kappa": prof.to_json(),
        "errorBound": {str(q): v for q, v in prof.error_bound.items()},
        "conditionC": {"holds": cc.holds, "checked": cc.checked, "failures": cc.failures},
        "Y": {"value": Y.value, "branches": Y.branches, "binding": Y.binding, "variant": Y.variant},
    }
    rows = "".join(f"{q},{b},{v}\n" for q in prof.moduli for b, v in enumerate(prof.table(q)))
    rep.emit("dist", payload, "q,b,kappa\n" + rows)


def _nmax(cfg) -> int:
    if cfg.get("nMax"):
        return cfg["nMax"]
    if cfg.get("n"):
        return max(_ns(cfg))
    return min(cfg["s"] * cfg["X"] ** cfg["k"], 10**5)


def cmd_count(cfg, rep: Reporter) -> None:
    nmax = _nmax(cfg)
    k = cfg["k"]
    X = max(cfg["X"], iroot(nmax, k) + 1)
    A = _set(cfg, X)
    if cfg["u"]:
        res = count_mixed(A, k, cfg["s"], cfg["u"], nmax, mode=cfg["countMode"])
    else:
        res = count_representations(A, k, cfg["s"], nmax, mode=cfg["countMode"], check_windows=cfg["checkWindows"], seed=cfg["seed"])
    table = res.table
    payload = {
        "R": {"k": k, "s": cfg["s"], "u": cfg["u"], "nMax": nmax, "mode": res.mode, "values": [str(table[n]) for n in range(nmax + 1)]},
    }
    if res.check is not None:
        payload["R"]["fastCheck"] = {"windows": res.check.windows, "agree": res.check.agree}
    phi = _phi(cfg)
    Am = _set(cfg)
    energies = []
    for t in cfg["t"]:
        e = mean_value(Am, phi, t)
        energies.append({"t": t, "X": e.X, "I": e.value, "deltaHat": e.delta_hat, "lowerBound": e.lower_bound, "lowerBoundOk": e.lower_bound_ok})
    payload["meanValues"] = energies
    if cfg.get("xGrid") and len(cfg["xGrid"]) >= 2 and phi.r == 1:
        Ag = _set(cfg, max(cfg["xGrid"]))
        d = estimate_delta(Ag, k, cfg["t"][0], cfg["xGrid"])
        payload["delta"] = {"trace": d.trace, "omega": d.omega, "sigma0": d.sigma0}
    rep.emit("count", payload, table.to_csv())


def cmd_weyl(cfg, rep: Reporter) -> None:
    A = _set(cfg)
    phi = _phi(cfg)
    rows = []
    table = []
    for Q in cfg["QList"]:
        r = minor_arc_sup(A, phi, A.bound, Q, seed=cfg["seed"])
        rows.append({"Q": Q, "sup": r.sup, "argmax": r.argmax, "points": r.points, "experimental": r.experimental})
        table.append((Q, r.sup))
    payload = {"X": A.bound, "sweep": rows}
    if len(set(cfg["QList"])) >= 3:
        fit = fit_rho(table, float(A.count_up_to(A.bound)))
        payload["rhoFit"] = {"rho": fit.rho, "intercept": fit.intercept, "residualMax": fit.residual_max}
    rep.emit("weyl", payload, "Q,sup\n" + "".join(f"{Q},{s!r}\n" for Q, s in table))


def cmd_singular(cfg, rep: Reporter) -> None:
    phi = _phi(cfg)
    n = _ns(cfg)[0] if cfg.get("n") else 0
    mode = _mode(cfg, n)
    source = _source(cfg)
    Q = int(min(cfg["Q"], source.level))
    partial: dict = {}
    try:
        ser = truncated_series(source, phi, mode, Q)
        partial["series"] = ser.to_json()
        lfs = {}
        for p in (2, 3, 5, 7, 11, 13):
            if p > cfg["pMax"]:
                break
            h = cfg["hMax"]
            while h > 0 and p**h > min(source.level, MODULUS_CAP):
                h -= 1
            lfs[str(p)] = local_factor(source, phi, mode, p, h).to_json()
        partial["localFactors"] = lfs
        if phi.r == 1 or isinstance(mode, MeanValue):
            A = _set(cfg)
            approx = _approx(cfg, A)
            X = A.bound if mode.__class__ is MeanValue else max(2.0, n ** (1 / phi.k_max)) if n else A.bound
            integ = truncated_integral(approx, phi, mode, cfg.get("integralQ", cfg["Q"]), X, tol=cfg["tolerances"]["outer"], seed=cfg["seed"])
            partial["integral"] = integ.to_json()
            if isinstance(mode, MeanValue) and phi.r == 1:
                wts = schmidt_WT(approx, phi, mode.s, cfg["T"], X, samples=cfg["samples"], seed=cfg["seed"])
                partial["schmidt"] = [{"T": w.T, "W": w.value, "se": w.standard_error} for w in wts]
    except (QuadratureError, NonStabilized) as exc:
        raise NonConvergence(str(exc), partial) from exc
    csv_body = ser.per_q_csv()
    rep.emit("singular", partial, csv_body)


def _predictions(cfg, ns: list[int]):
    k, s, u = cfg["k"], cfg["s"], cfg["u"]
    theorem = "Mixed" if u else "Waring"
    if cfg["mode"] == "MeanValue":
        raise ConfigError("mode: predict/compare handle the Waring variants")
    if cfg.get("phi") and len(cfg["phi"]) > 1:
        raise ConfigError("phi: Waring predictions need a single monomial")
    Xn = iroot(max(ns), k) + 1
    A = _set(cfg, max(cfg["X"], Xn))
    approx = _approx(cfg, A)
    Q = int(cfg["Q"])
    if cfg.get("series") is not None:
        S = np.full(len(ns), float(cfg["series"]))
        sQ = None
    else:
        src = _source(cfg, A)
        Q = min(Q, src.level)
        S = series_values(waring_series_table(src, k, s, Q, u), ns)
        sQ = Q
    if cfg.get("integral") is not None:
        J, jQ = float(cfg["integral"]), None
    else:
        jQ = cfg.get("integralQ", cfg["Q"])
        mode = Mixed(s, u) if u else Waring(s)
        J = truncated_integral(approx, k, mode, jQ, float(Xn), tol=cfg["tolerances"]["outer"]).value
    out = []
    for n, sv in zip(ns, S):
        A_val = float(approx.evaluate(n ** (1 / k))[0])
        out.append(main_term(theorem, A_value=A_val, series=float(sv), integral=J, s=s, k=k, u=u, n=n, series_Q=sQ, integral_Q=jQ))
    return out


def cmd_predict(cfg, rep: Reporter) -> None:
    ns = _ns(cfg)
    preds = _predictions(cfg, ns)
    payload = {"predictions": [p.to_json() for p in preds]}
    if cfg.get("applicability"):
        ap = cfg["applicability"]
        payload["applicability"] = applicability(ap["theorem"], ap.get("measurements", {})).to_json()
    rep.emit("predict", payload, "n,mainTerm\n" + "".join(f"{int(p.point)},{p.main_term!r}\n" for p in preds))


def cmd_compare(cfg, rep: Reporter) -> None:
    ns = _ns(cfg)
    preds = _predictions(cfg, ns)
    nmax = max(ns)
    k = cfg["k"]
    A = _set(cfg, max(cfg["X"], iroot(nmax, k) + 1))
    if cfg["u"]:
        res = count_mixed(A, k, cfg["s"], cfg["u"], nmax, mode=cfg["countMode"])
    else:
        res = count_representations(A, k, cfg["s"], nmax, mode=cfg["countMode"], check_windows=cfg["checkWindows"], seed=cfg["seed"])
    exact = [float(res.table[n]) for n in ns]
    comp = compare(ns, exact, [p.main_term for p in preds], cfg["window"])
    payload = {
        "comparison": comp.to_json(),
        "countMode": res.mode,
        "fastCheck": None if res.check is None else {"windows": res.check.windows, "agree": res.check.agree},
        "constituents": [p.to_json() for p in preds],
    }
    rep.json("compare.json", payload)
    rep.csv("compare.csv", comp.to_csv())


HANDLERS = {
    "set": cmd_set,
    "dist": cmd_dist,
    "count": cmd_count,
    "weyl": cmd_weyl,
    "singular": cmd_singular,
    "predict": cmd_predict,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="circleforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"circleforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VAL")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--threads", type=int, default=None, metavar="N")
        p.add_argument("--seed", type=int, default=None, metavar="N")
        p.add_argument("--format", choices=("csv", "json"), default="json")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg["output"])
    rep = Reporter(cfg, args.command, out, args.format)
    try:
        HANDLERS[args.command](cfg, rep)
    except (ConfigError, ValueError, KeyError) as exc:
        if isinstance(exc, CrossCheckError):
            raise
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        rep.json(f"{args.command}.partial.json", {"error": str(exc), "partial": exc.partial})
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (QuadratureError, NonStabilized) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    for f in rep.files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
