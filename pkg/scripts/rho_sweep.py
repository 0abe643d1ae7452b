"""Fit the minor-arc exponent for several sets and degrees and print a CSV table."""

import argparse

from circleforge.expsum import PolySystem, fit_rho, minor_arc_sup
from circleforge.sets import Ellipsephic, Naturals, Primes, generate_set

SETS = {
    "naturals": (Naturals(), 2000),
    "primes": (Primes(), 10**4),
    "ellipsephic": (Ellipsephic(5, {0, 1, 3}), 5**5),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--Q", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    args = ap.parse_args()
    print("set,k,X,Q,sup,rho")
    for name, (spec, X) in SETS.items():
        A = generate_set(spec, X)
        total = float(A.count_up_to(X))
        for k in args.k:
            phi = PolySystem.monomial(k)
            table = [(Q, minor_arc_sup(A, phi, X, Q).sup) for Q in args.Q]
            rho = fit_rho(table, total).rho
            for Q, sup in table:
                print(f"{name},{k},{X},{Q},{sup:.6g},{rho:.4f}")


if __name__ == "__main__":
    main()
