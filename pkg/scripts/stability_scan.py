"""Trace, determinant and eigenvalue moduli of linear update matrices over ħ.

    python scripts/stability_scan.py [--methods a1,symplectic_euler,decoupled:sdirk2] [--out scan.csv]

Also reports the first ħ on the grid where each method turns unstable.
"""
import argparse

import numpy as np

from asearch.analysis import stability_report
from asearch.scenes import write_csv

DEFAULT = "a1,symplectic_euler,midpoint,implicit_euler,decoupled:implicit_euler,decoupled:midpoint,decoupled:sdirk2"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--methods", default=DEFAULT)
    ap.add_argument("--hbar-min", type=float, default=-3.0, help="log10")
    ap.add_argument("--hbar-max", type=float, default=8.0, help="log10")
    ap.add_argument("--points", type=int, default=111)
    ap.add_argument("--out", default="stability_scan.csv")
    args = ap.parse_args(argv)
    grid = np.logspace(args.hbar_min, args.hbar_max, args.points)
    methods = [m for m in args.methods.split(",") if m]
    rows = stability_report(methods, grid)
    write_csv(args.out, ("method", "hbar", "tr", "det", "abs_l1", "abs_l2", "unstable"),
              [[r.method, r.hbar, r.tr, r.det, r.abs_l1, r.abs_l2, int(r.unstable)] for r in rows])
    for m in methods:
        mine = [r for r in rows if r.method == m]
        bad = next((r.hbar for r in mine if r.unstable), None)
        tr_min = min(r.tr for r in mine)
        print(f"{m:28s} min Tr {tr_min:+.5f}  " + (f"unstable from hbar {bad:.3g}" if bad else "stable on grid"))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
