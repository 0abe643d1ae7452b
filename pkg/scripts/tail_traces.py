"""Dyadic tail traces of the truncated singular series and integral, plus W_T."""

import argparse

from circleforge.sets import Naturals
from circleforge.singular import MeanValue, Waring, schmidt_WT, truncated_integral, truncated_series, uniform_measure


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s", type=int, default=4)
    ap.add_argument("--Q", type=int, default=200)
    ap.add_argument("--samples", type=int, default=1 << 22)
    args = ap.parse_args()
    s, Q = args.s, args.Q
    S = truncated_series(Naturals(), 2, MeanValue(s), Q, dyadic_from=Q // 8)
    J = truncated_integral(uniform_measure(), 2, MeanValue(s), Q, dyadic_from=Q / 8)
    Jw = truncated_integral(uniform_measure(), 2, Waring(s), Q)
    print("quantity,Q,dyadic_difference")
    for Qd, d in S.dyadic:
        print(f"series,{Qd},{d:.6e}")
    for Qd, d in J.dyadic:
        print(f"integral,{Qd:g},{d:.6e}")
    print(f"# series {float(S.value):.8f} delta {S.tail.delta:.3f}")
    print(f"# mean-value integral {J.value:.8f} delta {J.tail.delta:.3f}")
    print(f"# Waring integral {Jw.value:.8f}")
    print("T,W_T,se,gap")
    for r in schmidt_WT(uniform_measure(), 2, s, [4, 8, 16, 32], samples=args.samples):
        print(f"{r.T:g},{r.value:.8f},{r.standard_error:.2e},{abs(r.value - J.value):.3e}")


if __name__ == "__main__":
    main()
