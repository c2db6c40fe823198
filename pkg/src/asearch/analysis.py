"""Verification instruments: linear update matrices, the single-particle
collision harness, a Störmer-Verlet reference integrator and modal spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from .core import MassMatrix, Potential, SystemState, kinetic_energy
from .integrators import (
    Integrator,
    IntegratorSpec,
    step_a_alpha,
    step_decoupled_linear,
    step_explicit_euler,
    step_implicit_euler,
    step_midpoint,
    step_symplectic_euler,
    step_theta_inner,
    step_theta_outer,
    step_trapezoidal,
)
from .potentials import IpcBarrier1D, NeoHookeanChain1D, OneSidedQuadraticBarrier, QuadraticSpring
from .solver import NewtonSettings
from . import tableaux

UNSTABLE_TOL = 1e-9


# ---------------------------------------------------------------------------
# linear update matrices


@dataclass(frozen=True)
class LinearUpdateMatrix:
    """One step of a method on x'' = -ħ x (m = 1, h = 1) as a 2×2 map of (x, v)."""

    Q: np.ndarray
    hbar: float
    method: str
    alpha: Optional[float] = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.Q))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.Q))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.Q)

    @property
    def moduli(self) -> np.ndarray:
        """Eigenvalue moduli, descending."""
        return np.sort(np.abs(self.eigenvalues))[::-1]

    def unstable(self, tol: float = UNSTABLE_TOL) -> bool:
        return bool(self.moduli[0] > 1.0 + tol)


def _linear_settings(hbar: float) -> NewtonSettings:
    # implicit positions scale like 1/(1+ħ); resolve them down to unit-scale rounding
    tol = max(1e-13 / (1.0 + abs(hbar)), 8.0 * np.finfo(float).eps)
    return NewtonSettings(absolute_tolerance=tol, residual_tolerance=None,
                          max_iterations=8)

_ALPHA_METHODS = ("a_alpha",)


def _linear_stepper(method: str, alpha: Optional[float], hbar: float) -> Callable:
    st = _linear_settings(hbar)
    steppers = {
        "explicit_euler": lambda s, m, P: step_explicit_euler(s, m, P, 1.0),
        "implicit_euler": lambda s, m, P: step_implicit_euler(s, m, P, 1.0, settings=st),
        "symplectic_euler": lambda s, m, P: step_symplectic_euler(s, m, P, 1.0),
        "midpoint": lambda s, m, P: step_midpoint(s, m, P, 1.0, st),
        "trapezoidal": lambda s, m, P: step_trapezoidal(s, m, P, 1.0, st),
        "a1": lambda s, m, P: step_a_alpha(s, m, P, None, 1.0, 1.0, st)[0],
        "a_alpha": lambda s, m, P: step_a_alpha(s, m, P, None, 1.0, alpha, st)[0],
    }
    if method.startswith("theta_inner:") or method.startswith("theta_outer:"):
        kind, theta = method.split(":")
        fn = step_theta_inner if kind == "theta_inner" else step_theta_outer
        return lambda s, m, P: fn(s, m, P, 1.0, float(theta), st)
    try:
        return steppers[method]
    except KeyError:
        raise ValueError(f"no linear update matrix for method {method!r}") from None


def build_update_matrix(method: str, hbar: float, alpha: Optional[float] = None) -> LinearUpdateMatrix:
    """Assemble Q by stepping the unit basis states of the 1-dof spring problem.

    ``method`` is an integrator kind (``a_alpha`` needs ``alpha``), a
    ``theta_inner:<θ>``/``theta_outer:<θ>`` pair, or ``decoupled:<tableau>``
    for the decoupled α-method over any catalog tableau.
    """
    hbar = float(hbar)
    if method.startswith("decoupled:"):
        tab = tableaux.get(method.split(":", 1)[1])
        a = 1.0 if alpha is None else float(alpha)
        return LinearUpdateMatrix(step_decoupled_linear(tab, hbar, a), hbar, method, a)
    if method == "a1":
        alpha = 1.0
    elif method in _ALPHA_METHODS:
        if alpha is None:
            raise ValueError("a_alpha needs an alpha value")
        alpha = float(alpha)
    else:
        alpha = None
    step = _linear_stepper(method, alpha, hbar)
    m = MassMatrix.uniform(1.0, 1)
    P = QuadraticSpring(hbar)
    cols = []
    for x0, v0 in ((1.0, 0.0), (0.0, 1.0)):
        s = step(SystemState([x0], [v0]), m, P)
        cols.append([s.x[0], s.v[0]])
    return LinearUpdateMatrix(np.array(cols).T, hbar, method, alpha)


@dataclass(frozen=True)
class StabilityRow:
    method: str
    hbar: float
    alpha: Optional[float]
    tr: float
    det: float
    abs_l1: float
    abs_l2: float
    unstable: bool


def _takes_alpha(method: str) -> bool:
    return method in _ALPHA_METHODS or method.startswith("decoupled:")


def stability_report(methods: Sequence[str], hbar_grid: Iterable[float],
                     alpha_grid: Optional[Iterable[float]] = None) -> list:
    """Trace, determinant and eigenvalue moduli of each method over the grids.

    The α grid applies only to methods that take α; others get one row per ħ.
    """
    hbars = [float(x) for x in hbar_grid]
    alphas = [1.0] if alpha_grid is None else [float(a) for a in alpha_grid]
    rows = []
    for method in methods:
        for hb in hbars:
            for a in (alphas if _takes_alpha(method) else [None]):
                U = build_update_matrix(method, hb, a)
                l1, l2 = U.moduli
                rows.append(StabilityRow(method, hb, U.alpha, U.trace, U.det, float(l1), float(l2), U.unstable()))
    return rows


# ---------------------------------------------------------------------------
# single-particle collision harness


@dataclass(frozen=True)
class CollisionScenario:
    """A unit-mass particle flying at ``speed`` into a one-sided barrier at the origin.

    For the quadratic barrier ω² = k/m; for the IPC barrier ω² = κ/(m d̂²)
    sets κ. The particle starts a fraction ``beta`` of a step outside the
    barrier support. ``target_speed`` initialises A-search with the energy of
    a different incoming speed.
    """

    barrier: str = "quadratic"
    omega2: float = 1.0
    beta: float = 0.5
    h: float = 1.0
    speed: float = 1.0
    alpha_max: float = 1.1
    dhat: float = 1.0
    mass: float = 1.0
    target_speed: Optional[float] = None

    def __post_init__(self):
        if self.barrier not in ("quadratic", "ipc"):
            raise ValueError(f"unknown barrier kind {self.barrier!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if min(self.omega2, self.h, self.speed, self.dhat, self.mass) <= 0:
            raise ValueError("omega2, h, speed, dhat and mass must be positive")

    @classmethod
    def at_hbar(cls, hbar: float, barrier: str = "quadratic", beta: float = 0.5, **kw) -> "CollisionScenario":
        """Quadratic: h = 1, ω² = ħ. IPC: ω² = 1 (κ = m d̂²), h = √ħ."""
        if barrier == "quadratic":
            return cls(barrier, omega2=float(hbar), beta=beta, h=1.0, **kw)
        return cls(barrier, omega2=1.0, beta=beta, h=math.sqrt(hbar), **kw)

    @property
    def hbar(self) -> float:
        return self.omega2 * self.h * self.h

    @property
    def support_edge(self) -> float:
        return 0.0 if self.barrier == "quadratic" else self.dhat

    @property
    def potential(self) -> Potential:
        if self.barrier == "quadratic":
            return OneSidedQuadraticBarrier(self.mass * self.omega2, orientation=-1)
        return IpcBarrier1D(self.mass * self.omega2 * self.dhat**2, self.dhat, wall=0.0, side=1)

    @property
    def mass_matrix(self) -> MassMatrix:
        return MassMatrix.uniform(self.mass, 1)

    @property
    def initial_state(self) -> SystemState:
        return SystemState([self.support_edge + self.beta * self.h * self.speed], [-self.speed])

    def outside(self, x: float) -> bool:
        return x >= self.support_edge

    def newton_settings(self) -> NewtonSettings:
        # positions inside the barrier are O(speed/(h ω²)) or O(d̂); resolve them finely
        scale = self.speed / (self.h * self.omega2) if self.barrier == "quadratic" else self.dhat
        return NewtonSettings(absolute_tolerance=1e-8 * scale, max_iterations=500)


@dataclass
class CollisionResult:
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    alpha: np.ndarray
    resolve_steps: int
    steps_in_contact: int
    exit_speed: float

    @property
    def kinetic(self) -> np.ndarray:
        return 0.5 * self.v**2


def collide(scenario: CollisionScenario, method: str, max_steps: int = 10**6,
            settings: Optional[NewtonSettings] = None) -> CollisionResult:
    """Step until the particle is outside the support and moving away on two
    consecutive steps. ``resolve_steps`` is the first of those two steps."""
    m = scenario.mass_matrix
    P = scenario.potential
    spec = IntegratorSpec(method, alpha_max=max(1.0, scenario.alpha_max))
    integ = Integrator(spec, m, P, scenario.h, settings=settings or scenario.newton_settings())
    s = integ.initialize(scenario.initial_state)
    if scenario.target_speed is not None:
        s = s.evolve(energy_target=0.5 * scenario.mass * scenario.target_speed**2 + P.energy(s.x))
    xs, vs, Hs, alphas = [s.x[0]], [s.v[0]], [kinetic_energy(s.v, m) + P.energy(s.x)], [np.nan]
    away = 0
    first_away = None
    in_contact = 0
    for n in range(1, max_steps + 1):
        s, d = integ.step(s)
        x, v = s.x[0], s.v[0]
        xs.append(x)
        vs.append(v)
        Hs.append(d.energy_after)
        alphas.append(d.alpha_used)
        if scenario.outside(x) and v > 0:
            away += 1
            if away == 1:
                first_away = n
            if away == 2:
                return CollisionResult(np.array(xs), np.array(vs), np.array(Hs), np.array(alphas),
                                       first_away, in_contact, float(abs(vs[first_away])))
        else:
            away = 0
            if not scenario.outside(x):
                in_contact += 1
    raise RuntimeError(f"collision not resolved after {max_steps} steps")


# ---------------------------------------------------------------------------
# brute-force reference integration


@dataclass
class ReferenceTrajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray

    @property
    def final_velocity(self) -> np.ndarray:
        return self.v[-1]


def reference_trajectory(problem, dt_ref: float, duration: Optional[float] = None,
                         stop: Optional[Callable[[SystemState], bool]] = None,
                         record_every: int = 1, max_drift: float = 0.01,
                         max_steps: int = 10**8) -> ReferenceTrajectory:
    """Störmer-Verlet (kick-drift-kick) integration of ``problem``.

    ``problem`` needs ``mass_matrix``, ``potential`` and ``initial_state``
    attributes. Integration runs for ``duration`` or until ``stop(state)``;
    for a CollisionScenario without either, it stops once the particle has
    left the barrier support moving away. Relative energy drift above
    ``max_drift`` raises, since it means ``dt_ref`` is too coarse.
    """
    if dt_ref <= 0:
        raise ValueError("dt_ref must be positive")
    m = problem.mass_matrix
    P = problem.potential
    s0 = problem.initial_state
    if duration is None and stop is None:
        if not isinstance(problem, CollisionScenario):
            raise ValueError("need a duration or a stop condition")
        entered = []

        def stop(state, _p=problem):
            inside = not _p.outside(state.x[0])
            if inside:
                entered.append(True)
            return bool(entered) and not inside and state.v[0] > 0

    mi = 1.0 / m.diag
    x = np.array(s0.x, dtype=float)
    v = np.array(s0.v, dtype=float)
    H0 = kinetic_energy(v, m) + P.energy(x)
    scale = max(abs(H0), 1e-300)
    ts, xs, vs, Hs = [0.0], [x.copy()], [v.copy()], [H0]
    g = P.gradient(x)
    n_max = max_steps if duration is None else int(math.ceil(duration / dt_ref - 1e-9))
    t = 0.0
    for n in range(1, n_max + 1):
        v = v - 0.5 * dt_ref * mi * g
        x = x + dt_ref * v
        pe = P.energy(x)
        if not np.isfinite(pe):
            raise RuntimeError("reference integration crossed a barrier; use a smaller dt_ref")
        g = P.gradient(x)
        v = v - 0.5 * dt_ref * mi * g
        t = n * dt_ref
        H = kinetic_energy(v, m) + pe
        if abs(H - H0) > max_drift * scale:
            raise RuntimeError(f"reference energy drift {abs(H - H0) / scale:.2%} at t={t:g}; use a smaller dt_ref")
        done = stop is not None and stop(SystemState(x, v, t))
        if n % record_every == 0 or done or n == n_max:
            ts.append(t)
            xs.append(x.copy())
            vs.append(v.copy())
            Hs.append(H)
        if done:
            break
    else:
        if duration is None:
            raise RuntimeError(f"stop condition not met after {max_steps} steps")
    return ReferenceTrajectory(np.array(ts), np.array(xs), np.array(vs), np.array(Hs))


# ---------------------------------------------------------------------------
# modal energy spectrum


@dataclass
class SpectrumReport:
    """Energies of the vibrational modes (ascending frequency) plus the rigid part.

    Mode numbers used by :meth:`band` are 1-based over vibrational modes.
    """

    frequencies: np.ndarray
    energies: np.ndarray
    com_energy: float
    times: Optional[np.ndarray] = None

    @property
    def total(self) -> float:
        return float(np.sum(self.energies))

    def band(self, first: int, last: int) -> float:
        if first < 1 or last < first:
            raise ValueError("mode band must satisfy 1 <= first <= last")
        return float(np.sum(self.energies[first - 1:last]))


@dataclass
class ModalBasis:
    """Mass-orthonormal eigenmodes of a chain linearised at rest."""

    chain: NeoHookeanChain1D
    omega: np.ndarray
    modes: np.ndarray
    mass: np.ndarray
    rest: np.ndarray
    rigid: int = field(default=1)

    @classmethod
    def at_rest(cls, chain: NeoHookeanChain1D, zero_tol: float = 1e-8) -> "ModalBasis":
        if chain.masses is None:
            raise ValueError("chain needs lumped masses for a modal analysis")
        rest = chain.rest_positions(0.0)
        K = chain.hessian(rest)
        M = np.diag(chain.masses)
        w2, phi = scipy.linalg.eigh(K, M)
        scale = max(1.0, float(np.max(np.abs(w2))))
        if w2[0] < -zero_tol * scale:
            raise ValueError("stiffness at rest is indefinite")
        rigid = int(np.sum(w2 <= zero_tol * scale))
        omega = np.sqrt(np.clip(w2, 0.0, None))
        return cls(chain, omega, phi, np.asarray(chain.masses, dtype=float), rest, rigid)

    def project(self, x, v):
        """Modal coordinates and velocities of a state; translation is absorbed by the rigid mode."""
        n = self.chain.n_nodes
        u = np.asarray(x, dtype=float)[:n] - self.rest
        vv = np.asarray(v, dtype=float)[:n]
        q = self.modes.T @ (self.mass * u)
        qd = self.modes.T @ (self.mass * vv)
        return q, qd

    def energies(self, x, v):
        q, qd = self.project(x, v)
        E = 0.5 * (self.omega**2 * q**2 + qd**2)
        com = float(np.sum(E[: self.rigid]))
        return E[self.rigid:], com


def modal_spectrum(chain: NeoHookeanChain1D, x, v, basis: Optional[ModalBasis] = None) -> SpectrumReport:
    """Project one frame onto the chain's rest eigenmodes: E_i = ½(ω_i² q_i² + q̇_i²)."""
    basis = basis or ModalBasis.at_rest(chain)
    E, com = basis.energies(x, v)
    return SpectrumReport(basis.omega[basis.rigid:].copy(), E, com)


def aggregate_spectrum(chain: NeoHookeanChain1D, frames: Iterable, times=None) -> SpectrumReport:
    """Average the modal energies over ``frames`` of (x, v)."""
    basis = ModalBasis.at_rest(chain)
    Es, coms = [], []
    for x, v in frames:
        E, com = basis.energies(x, v)
        Es.append(E)
        coms.append(com)
    if not Es:
        raise ValueError("no frames to aggregate")
    return SpectrumReport(basis.omega[basis.rigid:].copy(), np.mean(Es, axis=0), float(np.mean(coms)),
                          None if times is None else np.asarray(times, dtype=float))


def linearized_energy(chain: NeoHookeanChain1D, x, v) -> float:
    """½ uᵀ K u + ½ vᵀ M v about the rest shape, with u the displacement."""
    n = chain.n_nodes
    rest = chain.rest_positions(0.0)
    u = np.asarray(x, dtype=float)[:n] - rest
    K = chain.hessian(rest)
    vv = np.asarray(v, dtype=float)[:n]
    return 0.5 * float(u @ K @ u) + 0.5 * float(np.dot(chain.masses * vv, vv))
