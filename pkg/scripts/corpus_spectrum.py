#!/usr/bin/env python3
"""lambda1, its delta bracket and the FD/shooting agreement for a drift corpus."""

import argparse
import time

from qsd1d import spectrum as sp
from qsd1d.boundary import check_hypothesis_h
from qsd1d.drift import build_coefficients, parse_drift


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("drifts", nargs="*", default=["x^3", "x^5", "2*x^3+x", "exp(x)-1"])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--no-shooting", action="store_true")
    args = ap.parse_args()

    print(f"{'drift':>10} {'R':>8} {'lambda1':>14} {'lambda2':>10} {'(4d)^-1':>9} {'d^-1':>9} "
          f"{'shooting':>14} {'rel diff':>9} {'sec':>5}")
    for text in args.drifts:
        t0 = time.perf_counter()
        table = build_coefficients(parse_drift(text), 16.0, 1024)
        r = sp.solve_spectrum(table, check_hypothesis_h(table), n=args.n)
        shoot, diff = float("nan"), float("nan")
        if not args.no_shooting:
            s = sp.ground_state_shooting(table, r.R, (0.99 * r.lambda1_lo, 1.01 * r.lambda1_hi))
            shoot, diff = s.lambda1, abs(s.lambda1 - r.lambda1) / r.lambda1
        print(f"{text:>10} {r.R:8.4f} {r.lambda1_extrapolated:14.10f} {r.lambda2:10.5f} "
              f"{r.lambda1_lo:9.5f} {r.lambda1_hi:9.5f} {shoot:14.10f} {diff:9.1e} "
              f"{time.perf_counter() - t0:5.1f}")


if __name__ == "__main__":
    main()
