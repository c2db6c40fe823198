"""Scene configuration files, scene construction and CSV-producing runs.

A scene file is INI-like: one scene per file, fixed sections and keys,
unknown names rejected with their line number. Example::

    [scene]
    kind = chain_collision
    preset = soft
    h = 1/300

    [integrator]
    kind = asearch
"""
from __future__ import annotations

import configparser
import csv
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .analysis import CollisionScenario, collide
from .core import MassMatrix, Potential, SystemState, kinetic_energy
from .integrators import DecaySpec, Integrator, IntegratorSpec, KINDS
from .potentials import (
    DEFAULT_DHAT,
    DEFAULT_KAPPA,
    CentralSpring2D,
    IpcBarrier1D,
    NeoHookeanChain1D,
    OneSidedQuadraticBarrier,
    QuadraticSpring,
    build_coulomb,
    build_rayleigh,
)
from .solver import NewtonSettings, SolverError

SCENE_KINDS = ("harmonic", "point_collision", "chain_collision", "central_orbit", "free_chain")
RUN_COLUMNS = ("step", "t", "H", "E_target", "friction_loss", "alpha", "KE", "PE", "com_v", "newton_iters")
SUMMARY_COLUMNS = ("value", "status", "steps", "final_com_v", "final_H", "max_abs_H_minus_E", "exit_speed", "error")


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    """A solver failure inside a run; ``step`` is the 1-based failing step."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


# ---------------------------------------------------------------------------
# value parsing


def parse_float(text: str) -> float:
    """Float that also accepts exact fractions such as ``1/300``."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(parse_float(num)) / float(parse_float(den))
    try:
        return float(text)
    except ValueError:
        return float(Fraction(text))


def parse_floats(text: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(parse_float(p) for p in parts)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else parse_float(text)


def _str(text: str) -> str:
    return text.strip()


def _int(text: str) -> int:
    return int(text.strip())


# section -> key -> parser
SCHEMA = {
    "scene": {"kind": _str, "preset": _str, "h": parse_float, "duration": parse_float,
              "snapshot_stride": _int, "name": _str},
    "integrator": {"kind": _str, "theta": parse_float, "alpha": parse_float, "alpha_min": parse_float,
                   "alpha_max": parse_float, "sparse_search": parse_bool, "e0_factor": parse_float,
                   "decay_tau": _opt_float, "decay_ground": parse_float, "decay_start": parse_float},
    "newton": {"step_tolerance_scale": parse_float, "residual_tolerance": _opt_float,
               "absolute_tolerance": _opt_float, "max_iterations": _int},
    "material": {"length": parse_float, "element_count": _int, "total_mass": parse_float,
                 "density": parse_float, "wave_speed": parse_float, "youngs_modulus": parse_float},
    "barrier": {"kind": _str, "kappa": parse_float, "dhat": parse_float, "wall": parse_float,
                "stiffness": parse_float},
    "damping": {"rayleigh_mu": parse_float},
    "friction": {"mu": parse_float},
    "initial": {"x": parse_floats, "v": parse_floats, "gap": parse_float, "speed": parse_float},
    "oscillator": {"mass": parse_float, "stiffness": parse_float},
    "orbit": {"stiffness": parse_float, "rest_radius": parse_float, "mass": parse_float},
    "collision": {"hbar": parse_float, "beta": parse_float, "speed": parse_float,
                  "target_speed": _opt_float, "omega2": parse_float, "max_steps": _int},
}


@dataclass(frozen=True)
class SceneConfig:
    """Flat view of a scene file; ``values`` maps ``section.key`` to parsed values."""

    kind: str
    h: float
    duration: float
    values: dict = field(default_factory=dict)
    name: str = "scene"

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def with_value(self, key: str, raw: str) -> "SceneConfig":
        """Copy with one ``section.key`` overridden from its text form."""
        section, _, name = key.partition(".")
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"unknown parameter {key!r}")
        try:
            val = SCHEMA[section][name](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        vals = dict(self.values)
        vals[key] = val
        return _finish(vals, self.name)


PRESETS = {
    "soft": {"material.wave_speed": 1.0},
    "medium": {"material.wave_speed": 10.0},
    "stiff": {"material.wave_speed": 100.0},
    "damped_soft": {"material.wave_speed": 1.0, "damping.rayleigh_mu": 0.05},
}
_CHAIN_BASE = {
    "material.length": 1.0,
    "material.element_count": 30,
    "material.total_mass": 10.0,
    "barrier.kind": "ipc",
    "barrier.kappa": DEFAULT_KAPPA,
    "barrier.dhat": DEFAULT_DHAT,
    "barrier.wall": 0.0,
    "initial.gap": 0.1,
    "initial.speed": -1.0,
    "scene.duration": 5.0,
}


def _line_numbers(text: str) -> dict:
    """Map section names and ``section.key`` names to their 1-based line."""
    lines = {}
    section = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault(section, i)
            continue
        key = re.split(r"[=:]", line, 1)[0].strip().lower()
        if section is not None:
            lines.setdefault(f"{section}.{key}", i)
    return lines


def parse_scene(text: str, name: str = "scene") -> SceneConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"line {getattr(exc, 'lineno', '?')}: {exc.message if hasattr(exc, 'message') else exc}") from None
    where = _line_numbers(text)
    vals = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"line {where.get(section, '?')}: unknown section [{section}]")
        for key, raw in cp.items(section):
            full = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"line {where.get(full, '?')}: unknown key {key!r} in [{section}]")
            try:
                vals[full] = SCHEMA[section][key](raw)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"line {where.get(full, '?')}: bad value for {key}: {exc}") from None
    return _finish(vals, vals.get("scene.name", name))


def load_scene(path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_scene(text, path.stem)


def _finish(vals: dict, name: str) -> SceneConfig:
    kind = vals.get("scene.kind")
    if kind not in SCENE_KINDS:
        raise ConfigError(f"scene.kind must be one of {', '.join(SCENE_KINDS)}; got {kind!r}")
    merged = {}
    preset = vals.get("scene.preset")
    if preset is not None:
        if kind != "chain_collision":
            raise ConfigError("presets apply to chain_collision scenes only")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(PRESETS)}")
        merged.update(_CHAIN_BASE)
        merged.update(PRESETS[preset])
    merged.update(vals)
    if "scene.h" not in merged:
        if kind != "point_collision":
            raise ConfigError("scene.h is required")
    duration = merged.get("scene.duration", 0.0 if kind == "point_collision" else None)
    if duration is None:
        raise ConfigError("scene.duration is required")
    h = merged.get("scene.h", 1.0)
    if h <= 0:
        raise ConfigError("scene.h must be positive")
    if duration < 0:
        raise ConfigError("scene.duration must be nonnegative")
    ikind = merged.get("integrator.kind")
    if ikind is None:
        raise ConfigError("integrator.kind is required")
    if ikind not in KINDS:
        raise ConfigError(f"integrator.kind must be one of {', '.join(KINDS)}; got {ikind!r}")
    cfg = SceneConfig(kind, h, duration, merged, name)
    try:
        integrator_spec(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def integrator_spec(cfg: SceneConfig) -> IntegratorSpec:
    g = cfg.get
    decay = None
    if g("integrator.decay_tau") is not None:
        decay = DecaySpec(g("integrator.decay_tau"), g("integrator.decay_ground", 0.0), g("integrator.decay_start", 0.0))
    return IntegratorSpec(
        g("integrator.kind"), theta=g("integrator.theta", 1.0), alpha=g("integrator.alpha", 1.0),
        alpha_min=g("integrator.alpha_min", 0.0), alpha_max=g("integrator.alpha_max", 1.1),
        sparse_search=g("integrator.sparse_search", False), decay=decay,
        e0_factor=g("integrator.e0_factor", 1.0),
    )


def newton_settings(cfg: SceneConfig) -> NewtonSettings:
    d = NewtonSettings()
    g = cfg.get
    return NewtonSettings(
        step_tolerance_scale=g("newton.step_tolerance_scale", d.step_tolerance_scale),
        residual_tolerance=g("newton.residual_tolerance", d.residual_tolerance),
        absolute_tolerance=g("newton.absolute_tolerance", d.absolute_tolerance),
        max_iterations=g("newton.max_iterations", d.max_iterations),
    )


# ---------------------------------------------------------------------------
# scene construction


@dataclass
class Scene:
    """Everything a run needs: masses, conservative potential, initial state, dissipation."""

    config: SceneConfig
    mass_matrix: MassMatrix
    potential: Potential
    initial_state: SystemState
    dissipation: Optional[Callable] = None
    chain: Optional[NeoHookeanChain1D] = None
    dim: int = 1

    @property
    def h(self) -> float:
        return self.config.h

    def com_velocity(self, v) -> float:
        m = self.mass_matrix.diag
        if self.dim == 1:
            return float(np.dot(m, v) / m.sum())
        p = (m * v).reshape(-1, self.dim).sum(axis=0)
        return float(np.linalg.norm(p) / (m.sum() / self.dim))


def _initial_vector(cfg, key, n, fallback):
    val = cfg.get(key)
    if val is None:
        return np.asarray(fallback, dtype=float)
    arr = np.asarray(val, dtype=float)
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ConfigError(f"{key} has {arr.size} entries, expected {n}")
    return arr


def build_chain(cfg: SceneConfig) -> NeoHookeanChain1D:
    g = cfg.get
    length = g("material.length", 1.0)
    n_el = g("material.element_count", 30)
    if n_el < 1 or length <= 0:
        raise ConfigError("material needs element_count >= 1 and length > 0")
    total = g("material.total_mass")
    if total is None:
        dens = g("material.density")
        if dens is None:
            raise ConfigError("material needs total_mass or density")
        total = dens * length
    rho = total / length
    if g("material.youngs_modulus") is not None:
        c = math.sqrt(g("material.youngs_modulus") / rho)
    elif g("material.wave_speed") is not None:
        c = g("material.wave_speed")
    else:
        raise ConfigError("material needs youngs_modulus or wave_speed")
    return NeoHookeanChain1D.from_rod(length, n_el, total, c)


def _barrier(cfg: SceneConfig, n: int):
    g = cfg.get
    kind = g("barrier.kind", "none")
    if kind == "none":
        return None
    if kind == "ipc":
        return IpcBarrier1D(g("barrier.kappa", DEFAULT_KAPPA), g("barrier.dhat", DEFAULT_DHAT), g("barrier.wall", 0.0), 1)
    if kind == "quadratic":
        return OneSidedQuadraticBarrier(g("barrier.stiffness", 1.0), orientation=-1, wall=g("barrier.wall", 0.0))
    raise ConfigError(f"barrier.kind must be ipc, quadratic or none; got {kind!r}")


def _dissipation(cfg: SceneConfig, chain, barrier, mass):
    mu_r = cfg.get("damping.rayleigh_mu", 0.0)
    mu_f = cfg.get("friction.mu", 0.0)
    if mu_r and mu_f:
        raise ConfigError("use either damping or friction, not both")
    if mu_r:
        base = chain if chain is not None else None
        if base is None:
            raise ConfigError("Rayleigh damping needs a chain scene")
        return lambda anchor, h: build_rayleigh(mu_r, base, anchor, h)
    if mu_f:
        if not isinstance(barrier, IpcBarrier1D):
            raise ConfigError("friction needs an ipc barrier")
        return lambda anchor, h: build_coulomb(mu_f, barrier, anchor, h)
    return None


def build_scene(cfg: SceneConfig) -> Scene:
    g = cfg.get
    kind = cfg.kind
    if kind in ("chain_collision", "free_chain"):
        chain = build_chain(cfg)
        n = chain.n_nodes
        m = MassMatrix(chain.masses)
        barrier = _barrier(cfg, n) if kind == "chain_collision" else None
        if kind == "chain_collision" and barrier is None:
            raise ConfigError("chain_collision needs a barrier")
        P = chain if barrier is None else chain + barrier
        wall = g("barrier.wall", 0.0)
        x0 = _initial_vector(cfg, "initial.x", n, chain.rest_positions(wall + g("initial.gap", 0.1)))
        v0 = _initial_vector(cfg, "initial.v", n, np.full(n, g("initial.speed", -1.0 if barrier else 0.0)))
        if not np.isfinite(P.energy(x0)):
            raise ConfigError("initial chain state is infeasible")
        return Scene(cfg, m, P, SystemState(x0, v0), _dissipation(cfg, chain, barrier, m), chain, 1)
    if kind == "harmonic":
        mass = g("oscillator.mass", 1.0)
        k = g("oscillator.stiffness", 1.0)
        x0 = _initial_vector(cfg, "initial.x", 1, [1.0])
        v0 = _initial_vector(cfg, "initial.v", 1, [0.0])
        n = x0.size
        return Scene(cfg, MassMatrix.uniform(mass, n), QuadraticSpring(k), SystemState(x0, v0))
    if kind == "central_orbit":
        mass = g("orbit.mass", 1.0)
        k = g("orbit.stiffness", 1.0)
        r0 = g("orbit.rest_radius", 1.0)
        x0 = _initial_vector(cfg, "initial.x", 2, [1.5, 0.0])
        v0 = _initial_vector(cfg, "initial.v", 2, [0.0, 1.0])
        if x0.size % 2:
            raise ConfigError("central_orbit coordinates come in (x, y) pairs")
        return Scene(cfg, MassMatrix.uniform(mass, x0.size), CentralSpring2D(k, r0), SystemState(x0, v0), dim=2)
    if kind == "point_collision":
        sc = collision_scenario(cfg)
        return Scene(cfg, sc.mass_matrix, sc.potential, sc.initial_state)
    raise ConfigError(f"unknown scene kind {kind!r}")  # pragma: no cover - guarded by _finish


def collision_scenario(cfg: SceneConfig) -> CollisionScenario:
    g = cfg.get
    barrier = g("barrier.kind", "quadratic")
    beta = g("collision.beta", 0.5)
    extra = dict(speed=g("collision.speed", 1.0), alpha_max=g("integrator.alpha_max", 1.1),
                 target_speed=g("collision.target_speed"))
    if barrier == "ipc":
        extra["dhat"] = g("barrier.dhat", 1.0)
    if g("collision.hbar") is not None:
        return CollisionScenario.at_hbar(g("collision.hbar"), barrier, beta, **extra)
    return CollisionScenario(barrier, omega2=g("collision.omega2", 1.0), beta=beta, h=cfg.h, **extra)


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunRecord:
    rows: list
    snapshots: list
    name: str = "scene"
    exit_speed: float = float("nan")

    @property
    def steps(self) -> int:
        return len(self.rows)

    def final(self, column: str) -> float:
        if not self.rows:
            return float("nan")
        return self.rows[-1][RUN_COLUMNS.index(column)]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in r])


def _cell(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path):
    """Header and rows of a CSV written by this module; numeric cells become floats."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[_cell(x) for x in r] for r in rd]
    return header, rows


def _row(step, state, diag, scene):
    m = scene.mass_matrix
    ke = kinetic_energy(state.v, m)
    pe = scene.potential.energy(state.x)
    return [step, float(state.t), float(diag.energy_after), float(diag.target), float(diag.friction_loss),
            float(diag.alpha_used), ke, float(pe), scene.com_velocity(state.v), int(diag.newton_iters)]


def run(cfg: SceneConfig, progress: Optional[Callable[[int, int], None]] = None) -> RunRecord:
    """Simulate a scene. Deterministic: the same config yields identical records."""
    scene = build_scene(cfg)
    stride = max(1, cfg.get("scene.snapshot_stride", 1))
    if cfg.kind == "point_collision":
        sc = collision_scenario(cfg)
        try:
            res = collide(sc, cfg.get("integrator.kind"), max_steps=cfg.get("collision.max_steps", 10**6))
        except SolverError as exc:
            raise RunError(f"solver failure: {exc}", None) from exc
        rows, snaps = [], [(0.0, res.x[:1], res.v[:1])]
        m = sc.mass_matrix
        for n in range(1, len(res.x)):
            s = SystemState([res.x[n]], [res.v[n]], n * sc.h)
            ke = kinetic_energy(s.v, m)
            pe = sc.potential.energy(s.x)
            rows.append([n, n * sc.h, float(res.energy[n]), float("nan"), 0.0, float(res.alpha[n]),
                         ke, pe, float(res.v[n]), 0])
            if n % stride == 0 or n == len(res.x) - 1:
                snaps.append((n * sc.h, s.x, s.v))
        return RunRecord(rows, snaps, cfg.name, res.exit_speed)
    integ = Integrator(integrator_spec(cfg), scene.mass_matrix, scene.potential, cfg.h,
                       scene.dissipation, newton_settings(cfg))
    state = integ.initialize(scene.initial_state)
    n_steps = int(round(cfg.duration / cfg.h))
    rows = []
    snaps = [(0.0, state.x, state.v)]
    for n in range(1, n_steps + 1):
        try:
            state, diag = integ.step(state)
        except SolverError as exc:
            raise RunError(f"solver failure at step {n}: {exc}", n) from exc
        rows.append(_row(n, state, diag, scene))
        if n % stride == 0 or n == n_steps:
            snaps.append((float(state.t), state.x, state.v))
        if progress is not None:
            progress(n, n_steps)
    return RunRecord(rows, snaps, cfg.name)


def write_run(record: RunRecord, out_dir) -> tuple:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    main = out / f"{record.name}.csv"
    states = out / f"{record.name}_states.csv"
    write_csv(main, RUN_COLUMNS, record.rows)
    n = len(record.snapshots[0][1]) if record.snapshots else 0
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    write_csv(states, header, [[t, *x, *v] for t, x, v in record.snapshots])
    return main, states


def read_states(path):
    """(times, x frames, v frames) from a ``*_states.csv`` file."""
    header, rows = read_csv(path)
    if not header or header[0] != "t":
        raise ConfigError(f"{path} is not a states file")
    n = (len(header) - 1) // 2
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return arr[:, 0], arr[:, 1:1 + n], arr[:, 1 + n:]


# ---------------------------------------------------------------------------
# sweeps


def _summarise(value, record: RunRecord):
    H = np.array([r[2] for r in record.rows]) if record.rows else np.array([])
    E = np.array([r[3] for r in record.rows]) if record.rows else np.array([])
    gap = np.abs(H - E)
    gap = gap[np.isfinite(gap)]
    return [value, "ok", record.steps, record.final("com_v"), record.final("H"),
            float(gap.max()) if gap.size else float("nan"), record.exit_speed, ""]


def _sweep_one(args):
    cfg, key, raw, out_dir = args
    try:
        sub = cfg.with_value(key, raw)
        sub = replace(sub, name=f"{cfg.name}_{key.replace('.', '-')}={_safe(raw)}")
        rec = run(sub)
        if out_dir is not None:
            write_run(rec, out_dir)
        return _summarise(raw, rec)
    except (RunError, ConfigError, SolverError, ValueError) as exc:
        return [raw, "failed", 0, float("nan"), float("nan"), float("nan"), float("nan"), str(exc)]


def _safe(raw: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", raw.strip())


def sweep_workers(jobs: Optional[int]) -> int:
    """Worker count: ``jobs`` (default 1), capped by the ASEARCH_THREADS variable."""
    n = 1 if jobs is None else max(1, int(jobs))
    cap = os.environ.get("ASEARCH_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"ASEARCH_THREADS must be an integer, got {cap!r}") from None
    return n


def sweep(cfg: SceneConfig, key: str, values, out_dir=None, jobs: Optional[int] = None) -> list:
    """One run per value of ``key``; returns summary rows (failures included, not raised)."""
    section, _, name = key.partition(".")
    if section not in SCHEMA or name not in SCHEMA[section]:
        raise ConfigError(f"unknown sweep parameter {key!r}")
    values = [str(v) for v in values]
    tasks = [(cfg, key, v, out_dir) for v in values]
    workers = sweep_workers(jobs)
    if workers == 1 or len(tasks) <= 1:
        summary = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            summary = list(ex.map(_sweep_one, tasks))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / f"{cfg.name}_sweep.csv", SUMMARY_COLUMNS, summary)
    return summary
