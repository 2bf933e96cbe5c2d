#!/usr/bin/env python3
"""max eta1 under repeated doubling of the truncation point."""

import argparse

from qsd1d import spectrum as sp
from qsd1d.drift import build_coefficients, parse_drift


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("drifts", nargs="*", default=["x^3", "x^5", "2*x^3+x", "exp(x)-1"])
    ap.add_argument("--doublings", type=int, default=4)
    args = ap.parse_args()

    for text in args.drifts:
        rep = sp.boundedness_check(build_coefficients(parse_drift(text), 16.0, 1024),
                                   doublings=args.doublings)
        print(f"{text}: passed={rep['passed']} contracting={rep['contracting']}")
        for R, m, plat in zip(rep["R"], rep["max_eta1"], rep["plateau_x"]):
            print(f"    R={R:9.4f}  max eta1={m:.8f}  plateau at x={plat:.4f}")
        print("    relative changes: " + ", ".join(f"{c:.3%}" for c in rep["relative_change"]))
        if rep["note"]:
            print(f"    note: {rep['note']}")


if __name__ == "__main__":
    main()
