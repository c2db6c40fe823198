"""Command-line interface: ``asearch run|sweep|collide|stability|spectrum``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed
sub-runs in a sweep.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .analysis import CollisionScenario, aggregate_spectrum, collide, stability_report, ModalBasis
from .scenes import (
    ConfigError,
    RunError,
    build_scene,
    load_scene,
    parse_float,
    read_states,
    run,
    sweep,
    write_csv,
    write_run,
    SUMMARY_COLUMNS,
)
from .solver import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_SWEEP = 0, 2, 3, 4


def parse_grid(spec: str) -> np.ndarray:
    """``logspace:a:b:n``, ``linspace:a:b:n`` or a comma list (fractions allowed)."""
    spec = spec.strip()
    for name, fn in (("logspace", np.logspace), ("linspace", np.linspace)):
        if spec.startswith(name + ":"):
            parts = spec.split(":")[1:]
            if len(parts) != 3:
                raise ConfigError(f"grid {spec!r} needs {name}:start:stop:count")
            return fn(parse_float(parts[0]), parse_float(parts[1]), int(parts[2]))
    if not spec:
        return np.array([])
    return np.array([parse_float(p) for p in spec.split(",") if p.strip()])


def _cmd_run(args) -> int:
    cfg = load_scene(args.config)
    rec = run(cfg)
    main, states = write_run(rec, args.out)
    print(f"{rec.steps} steps -> {main}")
    if rec.rows:
        print(f"final com_v {rec.final('com_v')!r}  final H {rec.final('H')!r}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_scene(args.config)
    values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    summary = sweep(cfg, args.param, values, args.out, args.jobs)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in summary:
        w.writerow([x if isinstance(x, str) else repr(x) for x in r])
    return EXIT_SWEEP if any(r[1] != "ok" for r in summary) else EXIT_OK


def _cmd_collide(args) -> int:
    sc = CollisionScenario.at_hbar(args.hbar, args.barrier, args.beta, alpha_max=args.alpha_max,
                                   speed=args.speed, target_speed=args.target_speed)
    res = collide(sc, args.method)
    print(f"# resolve_steps={res.resolve_steps} steps_in_contact={res.steps_in_contact} exit_speed={res.exit_speed!r}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "x", "v", "H", "alpha"])
    for n, (x, v, H, a) in enumerate(zip(res.x, res.v, res.energy, res.alpha)):
        w.writerow([n, repr(float(x)), repr(float(v)), repr(float(H)), repr(float(a))])
    return EXIT_OK


def _cmd_stability(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    alphas = parse_grid(args.alpha_grid) if args.alpha_grid else None
    rows = stability_report(methods, parse_grid(args.hbar_grid), alphas)
    table = [[r.method, r.hbar, "" if r.alpha is None else r.alpha, r.tr, r.det, r.abs_l1, r.abs_l2, r.unstable]
             for r in rows]
    header = ("method", "hbar", "alpha", "tr", "det", "abs_l1", "abs_l2", "unstable")
    if args.out:
        write_csv(args.out, header, table)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in table:
            w.writerow([x if isinstance(x, str) else (int(x) if isinstance(x, bool) else repr(float(x))) for x in r])
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    cfg = load_scene(args.scene)
    scene = build_scene(cfg)
    if scene.chain is None:
        raise ConfigError("spectrum needs a chain scene")
    t, xs, vs = read_states(args.states)
    if xs.shape[1] != scene.chain.n_nodes:
        raise ConfigError(f"states file has {xs.shape[1]} nodes, scene has {scene.chain.n_nodes}")
    keep = t >= args.after
    basis = ModalBasis.at_rest(scene.chain)
    header = ["t", "com_energy"] + [f"E{i}" for i in range(1, len(basis.omega) - basis.rigid + 1)]
    rows = []
    for ti, x, v in zip(t[keep], xs[keep], vs[keep]):
        E, com = basis.energies(x, v)
        rows.append([ti, com, *E])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["omega", ""] + [repr(float(o)) for o in basis.omega[basis.rigid:]])
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    if rows:
        agg = aggregate_spectrum(scene.chain, zip(xs[keep], vs[keep]))
        print(f"# mean total {agg.total!r}  mean com {agg.com_energy!r}  modes 4-15 {agg.band(4, min(15, len(agg.energies)))!r}",
              file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asearch", description="Energy-targeting time integration toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scene file")
    r.add_argument("config")
    r.add_argument("--out", default=".")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a scene over values of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="section.key, e.g. scene.h")
    s.add_argument("--values", required=True, help="comma list, e.g. 1/30,1/300")
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("collide", help="single-particle barrier collision")
    c.add_argument("--barrier", choices=("quadratic", "ipc"), default="quadratic")
    c.add_argument("--method", required=True)
    c.add_argument("--hbar", type=parse_float, required=True)
    c.add_argument("--beta", type=parse_float, required=True)
    c.add_argument("--alpha-max", type=parse_float, default=1.1)
    c.add_argument("--speed", type=parse_float, default=1.0)
    c.add_argument("--target-speed", type=parse_float, default=None)
    c.set_defaults(func=_cmd_collide)

    st = sub.add_parser("stability", help="update-matrix trace/det/eigenvalue table")
    st.add_argument("--methods", required=True, help="e.g. a1,symplectic_euler,decoupled:sdirk2")
    st.add_argument("--hbar-grid", required=True, help="logspace:-3:8:50, linspace:a:b:n or a list")
    st.add_argument("--alpha-grid", default=None)
    st.add_argument("--out", default=None)
    st.set_defaults(func=_cmd_stability)

    sp = sub.add_parser("spectrum", help="modal energies of recorded chain states")
    sp.add_argument("states")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--after", type=float, default=0.0, help="only frames with t >= this")
    sp.set_defaults(func=_cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
