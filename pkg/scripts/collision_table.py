"""Exit speed and step counts of a point mass hitting a barrier at large ħ, over the entry phase β.

    python scripts/collision_table.py [--barrier quadratic|ipc] [--hbar 1e8] [--alpha-max 1.1] [--target-speed V]
"""
import argparse
import csv
import sys

import numpy as np

from asearch.analysis import CollisionScenario, collide

METHODS = ("trapezoidal", "a1", "asearch")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--barrier", choices=("quadratic", "ipc"), default="quadratic")
    ap.add_argument("--hbar", type=float, default=1e8)
    ap.add_argument("--alpha-max", type=float, default=1.1)
    ap.add_argument("--target-speed", type=float, default=None)
    ap.add_argument("--betas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    args = ap.parse_args(argv)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["beta", "method", "resolve_steps", "steps_in_contact", "v1", "v2", "v3", "exit_speed"])
    for beta in (float(b) for b in args.betas.split(",")):
        sc = CollisionScenario.at_hbar(args.hbar, args.barrier, beta, alpha_max=args.alpha_max,
                                       target_speed=args.target_speed)
        for method in METHODS:
            r = collide(sc, method)
            vs = [f"{r.v[i]:.6f}" if i < len(r.v) else "" for i in (1, 2, 3)]
            w.writerow([beta, method, r.resolve_steps, r.steps_in_contact, *vs, f"{r.exit_speed:.6f}"])


if __name__ == "__main__":
    main()
