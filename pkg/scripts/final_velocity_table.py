"""Final centre-of-mass velocity of the 1-D chain bounce for every preset, step and integrator.

    python scripts/final_velocity_table.py [--presets soft,damped_soft] [--steps 1/30,1/300] [--jobs N] [--out table.csv]

Runs are independent, so ``--jobs`` spreads them over processes (capped by ASEARCH_THREADS).
"""
import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product

from asearch.scenes import parse_scene, run, sweep_workers

KINDS = ("bdf2", "a1", "asearch")


def final_com_v(job):
    preset, step, kind = job
    text = (f"[scene]\nkind = chain_collision\npreset = {preset}\nh = {step}\nsnapshot_stride = 1000000000\n"
            f"[integrator]\nkind = {kind}\n")
    return preset, step, kind, run(parse_scene(text)).final("com_v")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", default="soft,medium,stiff,damped_soft")
    ap.add_argument("--steps", default="1/30,1/300,1/3000,1/30000")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)
    jobs = list(product(args.presets.split(","), args.steps.split(","), KINDS))
    workers = sweep_workers(args.jobs)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(final_com_v, jobs))
    else:
        results = [final_com_v(j) for j in jobs]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["preset", "h", "integrator", "final_com_v"])
    for preset, step, kind, v in results:
        w.writerow([preset, step, kind, f"{v:.4f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
