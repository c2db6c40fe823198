"""Time steppers: classical baselines, the decoupled α-methods (A-1, A-search) and blending.

Every implicit step is posed as minimisation of an incremental potential and
handed to :func:`asearch.solver.minimize_incremental_potential`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import MassMatrix, Potential, SystemState, kinetic_energy
from .solver import IncrementalPotential, NewtonSettings, SolverError, minimize_incremental_potential
from .tableaux import Tableau, adjoint, rk_linear_step_matrix

KINDS = (
    "explicit_euler", "implicit_euler", "theta_inner", "theta_outer", "midpoint", "trapezoidal",
    "bdf2", "symplectic_euler", "a1", "a_alpha", "asearch", "blending",
)

# builds a damping/friction pseudo-potential from (anchor positions, effective step)
DissipationFactory = Callable[[np.ndarray, float], Potential]


@dataclass(frozen=True)
class DecaySpec:
    tau: float
    E_ground: float = 0.0
    start_time: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("decay time scale must be positive")


@dataclass(frozen=True)
class IntegratorSpec:
    kind: str
    theta: float = 1.0
    alpha: float = 1.0  # fixed α for kind="a_alpha"
    alpha_min: float = 0.0
    alpha_max: float = 1.1
    sparse_search: bool = False
    decay: Optional[DecaySpec] = None
    e0_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown integrator {self.kind!r}")
        if not self.alpha_min <= 1.0 <= self.alpha_max:
            raise ValueError("need alpha_min <= 1 <= alpha_max")
        if not 0.0 < self.e0_factor <= 1.0:
            raise ValueError("e0_factor must lie in (0, 1]")
        if self.kind in ("theta_inner", "theta_outer") and not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")


@dataclass
class StepDiagnostics:
    alpha_used: float = float("nan")
    energy_after: float = float("nan")
    target: float = float("nan")
    friction_loss: float = 0.0
    newton_iters: int = 0
    clipped: bool = False
    degenerate: bool = False
    feasible: bool = True
    searched: bool = True


@dataclass(frozen=True)
class History:
    x_prev: Optional[np.ndarray] = None
    v_prev: Optional[np.ndarray] = None

    @property
    def valid(self) -> bool:
        return self.x_prev is not None

    @classmethod
    def of(cls, state: SystemState) -> "History":
        return cls(state.x, state.v)


def _mdiag(m) -> np.ndarray:
    return m.diag if isinstance(m, MassMatrix) else np.asarray(m, dtype=float)


def _with_dissipation(P: Potential, P_fric: Optional[Potential]) -> Potential:
    return P if P_fric is None else P + P_fric


def _solve(m, P, target, weight, x_start, h, settings, log=None):
    """Minimise ½‖x - target‖²_m + weight·P(x).

    Newton starts from whichever of ``target`` and ``x_start`` has the lower
    objective: a target barely inside a barrier's domain has a huge Hessian
    that makes the step-size test pass far from the minimiser.
    """
    obj = IncrementalPotential(_mdiag(m), target, weight, P)
    x0 = target if obj.value(target) <= obj.value(x_start) else x_start
    x, rep = minimize_incremental_potential(x0, obj, settings, h=h)
    if log is not None:
        log.append(rep)
    if not rep.converged:
        raise SolverError(f"Newton did not converge (step norm {rep.step_norm:.3e})", rep)
    return x, rep


def _energy(m, P, x, v) -> float:
    pe = P.energy(x)
    return kinetic_energy(v, _mdiag(m)) + pe if np.isfinite(pe) else math.inf


# ---------------------------------------------------------------------------
# classical one-step and multistep methods


def step_explicit_euler(state, m, P, h):
    mi = 1.0 / _mdiag(m)
    return state.evolve(x=state.x + h * state.v, v=state.v - h * mi * P.gradient(state.x), t=state.t + h)


def step_implicit_euler(state, m, P, h, P_fric=None, settings=None, log=None):
    state2, _, _ = _implicit_euler(state, m, P, h, P_fric, settings, log)
    return state2


def _implicit_euler(state, m, P, h, P_fric, settings, log=None):
    x = state.x
    xt = x + h * state.v
    x1, rep = _solve(m, _with_dissipation(P, P_fric), xt, h * h, x, h, settings, log)
    w = (x1 - x) / h
    return state.evolve(x=x1, v=w, t=state.t + h), w, rep


def step_theta_inner(state, m, P, h, theta, settings=None, log=None):
    """z' = z + h f((1-θ) z + θ z'); θ=0, ½, 1 give explicit Euler, midpoint, implicit Euler."""
    if theta == 0.0:
        return step_explicit_euler(state, m, P, h)
    x, v = state.x, state.v
    # solve for the collocation point y = x + θ(x' - x)
    yt = x + theta * h * v
    y, _ = _solve(m, P, yt, (theta * h) ** 2, x, h, settings, log)
    x1 = x + (y - x) / theta
    v1 = v + (y - yt) / (theta * theta * h)
    return state.evolve(x=x1, v=v1, t=state.t + h)


def step_theta_outer(state, m, P, h, theta, settings=None, log=None):
    """z' = z + h((1-θ) f(z) + θ f(z')); θ=½ is the trapezoidal rule."""
    if theta == 0.0:
        return step_explicit_euler(state, m, P, h)
    x, v = state.x, state.v
    mi = 1.0 / _mdiag(m)
    a_n = -mi * P.gradient(x) if theta < 1.0 else np.zeros_like(x)
    xt = x + h * v + h * h * theta * (1.0 - theta) * a_n
    x1, _ = _solve(m, P, xt, (theta * h) ** 2, x, h, settings, log)
    # from x' = x + h((1-θ)v + θv'); avoids cancelling against the O(ħ) predictor
    v1 = ((x1 - x) / h - (1.0 - theta) * v) / theta
    return state.evolve(x=x1, v=v1, t=state.t + h)


def step_midpoint(state, m, P, h, settings=None, log=None):
    return step_theta_inner(state, m, P, h, 0.5, settings, log)


def step_trapezoidal(state, m, P, h, settings=None, log=None):
    return step_theta_outer(state, m, P, h, 0.5, settings, log)


def step_bdf2(state, history: History, m, P, h, dissipation: Optional[DissipationFactory] = None,
              settings=None, log=None):
    """z' = z + ⅔h f(z') + ⅓(z - z_prev), bootstrapped by implicit Euler when no history."""
    if not history.valid:
        P_fric = dissipation(state.x, h) if dissipation else None
        return step_implicit_euler(state, m, P, h, P_fric, settings, log)
    x, v = state.x, state.v
    he = 2.0 * h / 3.0
    xh = (4.0 * x - history.x_prev) / 3.0
    vh = (4.0 * v - history.v_prev) / 3.0
    P_fric = dissipation(xh, he) if dissipation else None
    xt = xh + he * vh
    x1, _ = _solve(m, _with_dissipation(P, P_fric), xt, he * he, x, h, settings, log)
    return state.evolve(x=x1, v=(x1 - xh) / he, t=state.t + h)


def step_symplectic_euler(state, m, P, h):
    """v' = v - h m⁻¹∇P(x), x' = x + h v'; explicit."""
    mi = 1.0 / _mdiag(m)
    v1 = state.v - h * mi * P.gradient(state.x)
    x1 = state.x + h * v1
    if not P.feasible(x1):
        from .core import InfeasibleStateError

        raise InfeasibleStateError("infeasible state: symplectic Euler crossed a barrier")
    return state.evolve(x=x1, v=v1, t=state.t + h)


# ---------------------------------------------------------------------------
# decoupled α-methods on the implicit Euler base


def update_energy_target(target: float, friction_loss: float, spec: IntegratorSpec, h: float,
                         t: float = 0.0) -> float:
    decay = spec.decay
    if decay is None or t < decay.start_time:
        return target - friction_loss
    return decay.E_ground + math.exp(-h / decay.tau) * (target - decay.E_ground - friction_loss)


_DV_ROUNDING = (64.0 * np.finfo(float).eps) ** 2


def solve_alpha(w, dv, m, pe, target, alpha_min, alpha_max):
    """Pick α so that pe + ½‖w - α dv‖²_m hits ``target``.

    Returns ``(alpha, clipped, degenerate)``. Real roots: the one closest to 1
    (ties go to the smaller). No real root: the vertex, which minimises the
    energy error. Then clip to [alpha_min, alpha_max]. A Δv at rounding level
    relative to w counts as zero.
    """
    md = _mdiag(m)
    a = 0.5 * float(np.dot(md * dv, dv))
    b = -float(np.dot(md * w, dv))
    kin = 0.5 * float(np.dot(md * w, w))
    c = kin + pe - target
    if a <= _DV_ROUNDING * kin:
        # energy does not depend on α
        if c < 0:
            return alpha_max, False, True
        if c > 0:
            return alpha_min, False, True
        return 1.0, False, True
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        alpha = -b / (2.0 * a)
        reached = False
    else:
        sq = math.sqrt(disc)
        q = -0.5 * (b + math.copysign(sq, b))
        roots = [q / a, c / q] if q != 0.0 else [0.0, 0.0]
        roots.sort()
        alpha = min(roots, key=lambda r: abs(r - 1.0))
        reached = True
    clipped_alpha = min(max(alpha, alpha_min), alpha_max)
    return clipped_alpha, (not reached) or clipped_alpha != alpha, False


def _alpha_step(state, m, P, P_fric, h, settings):
    """Shared implicit part: x', implicit velocity w, force-difference Δv, friction loss.

    The implicit force h m⁻¹∇P(x') is read off the solve as v - w (minus the
    friction part) rather than re-evaluated at x': near a stiff barrier a
    Newton-tolerance error in x' would otherwise be amplified by the stiffness.
    """
    x = state.x
    mi = 1.0 / _mdiag(m)
    new, w, rep = _implicit_euler(state, m, P, h, P_fric, settings)
    x1 = new.x
    dv = h * mi * P.gradient(x) - (state.v - w)
    if P_fric is not None:
        dv = dv + h * mi * P_fric.gradient(x1)
    loss = 2.0 * P_fric.energy(x1) if P_fric is not None else 0.0
    return x1, w, dv, loss, rep


def step_a_alpha(state, m, P, P_fric, h, alpha, settings=None):
    x1, w, dv, loss, rep = _alpha_step(state, m, P, P_fric, h, settings)
    v1 = w - alpha * dv
    diag = StepDiagnostics(alpha_used=alpha, friction_loss=loss, newton_iters=rep.iterations,
                           target=state.energy_target)
    diag.energy_after = _energy(m, P, x1, v1)
    new = state.evolve(x=x1, v=v1, t=state.t + h, accumulated_friction_loss=loss,
                       energy_target=state.energy_target - loss)
    return new, diag


def step_a1(state, m, P, P_fric, h, settings=None):
    """Decoupled symplectic step: implicit Euler positions, velocity corrected by the force difference."""
    return step_a_alpha(state, m, P, P_fric, h, 1.0, settings)


def step_asearch(state, m, P, P_fric, h, spec: IntegratorSpec, settings=None, recent_signs=()):
    """One A-search step.

    ``recent_signs`` holds sign(H - E) of the previous steps, used only when
    ``spec.sparse_search`` is set; the updated tuple is returned as third item.
    """
    if not np.isfinite(state.energy_target):
        raise ValueError("energy target not initialised")
    x1, w, dv, loss, rep = _alpha_step(state, m, P, P_fric, h, settings)
    target = update_energy_target(state.energy_target, loss, spec, h, state.t)
    pe = P.energy(x1)
    searched = True
    if spec.sparse_search:
        h_a1 = pe + 0.5 * float(np.dot(_mdiag(m) * (w - dv), w - dv))
        s = np.sign(h_a1 - target)
        window = tuple(recent_signs[-2:]) + (s,)
        searched = len(window) == 3 and s != 0 and all(si == s for si in window)
    if searched:
        alpha, clipped, degenerate = solve_alpha(w, dv, m, pe, target, spec.alpha_min, spec.alpha_max)
    else:
        alpha, clipped, degenerate = 1.0, False, False
    v1 = w - alpha * dv
    H1 = _energy(m, P, x1, v1)
    diag = StepDiagnostics(alpha_used=alpha, energy_after=H1, target=target, friction_loss=loss,
                           newton_iters=rep.iterations, clipped=clipped, degenerate=degenerate,
                           searched=searched)
    new = state.evolve(x=x1, v=v1, t=state.t + h, energy_target=target, accumulated_friction_loss=loss)
    signs = tuple(recent_signs[-2:]) + (float(np.sign(H1 - target)),)
    return new, diag, signs


def step_blending(state, m, P, h, settings=None, max_iter=60, log=None):
    """Full-state interpolation between implicit midpoint and implicit Euler matching the energy target."""
    target = state.energy_target
    if not np.isfinite(target):
        target = _energy(m, P, state.x, state.v)
    imp = step_implicit_euler(state, m, P, h, settings=settings, log=log)
    mid = step_midpoint(state, m, P, h, settings, log)
    tol = 1e-10 * max(1.0, abs(target))

    def at(a):
        return a * mid.x + (1 - a) * imp.x, a * mid.v + (1 - a) * imp.v

    def err(a):
        return _energy(m, P, *at(a)) - target

    lo, hi = 0.0, 1.0
    f_lo, f_hi = err(lo), err(hi)
    if np.sign(f_lo) == np.sign(f_hi) and f_lo != 0:
        f2 = err(2.0)
        f15 = err(1.5)
        monotone = np.isfinite(f2) and (f_hi - f_lo) * (f15 - f_hi) > 0 and (f15 - f_hi) * (f2 - f15) > 0
        if monotone and np.sign(f2) != np.sign(f_hi):
            lo, hi, f_lo, f_hi = 1.0, 2.0, f_hi, f2
    if f_lo == 0:
        alpha, clipped = lo, False
    elif np.sign(f_lo) == np.sign(f_hi) or not (np.isfinite(f_lo) and np.isfinite(f_hi)):
        alpha = lo if abs(f_lo) <= abs(f_hi) else hi
        clipped = True
    else:
        clipped = False
        for _ in range(max_iter):
            mid_a = 0.5 * (lo + hi)
            f_mid = err(mid_a)
            if abs(f_mid) <= tol:
                lo = hi = mid_a
                break
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid_a, f_mid
            else:
                hi = mid_a
        alpha = 0.5 * (lo + hi)
    x1, v1 = at(alpha)
    H1 = _energy(m, P, x1, v1)
    diag = StepDiagnostics(alpha_used=alpha, energy_after=H1, target=target, clipped=clipped,
                           feasible=bool(P.feasible(x1)))
    return state.evolve(x=x1, v=v1, t=state.t + h, energy_target=target), diag


# ---------------------------------------------------------------------------
# linear test problem for arbitrary tableaux


def step_decoupled_linear(tableau: Tableau, hbar: float, alpha: float = 1.0) -> np.ndarray:
    """2×2 update matrix of the decoupled α-method on x'' = -ħ x with h = 1.

    The position row comes from the tableau, the velocity row interpolates
    between the adjoint (weight α) and the tableau itself.
    """
    L = np.array([[0.0, 1.0], [-float(hbar), 0.0]])
    Q_phi = rk_linear_step_matrix(tableau, L)
    Q_adj = rk_linear_step_matrix(adjoint(tableau), L)
    return np.vstack([Q_phi[0], alpha * Q_adj[1] + (1.0 - alpha) * Q_phi[1]])


# ---------------------------------------------------------------------------
# stateful driver


@dataclass
class Integrator:
    """Owns the per-simulation stepping state (BDF2 history, sparse-search window)."""

    spec: IntegratorSpec
    mass: MassMatrix
    potential: Potential
    h: float
    dissipation: Optional[DissipationFactory] = None
    settings: NewtonSettings = field(default_factory=NewtonSettings)
    history: History = field(default_factory=History)
    _signs: tuple = ()

    def initialize(self, state: SystemState) -> SystemState:
        H0 = _energy(self.mass, self.potential, state.x, state.v)
        self.history = History()
        self._signs = ()
        return state.evolve(energy_target=self.spec.e0_factor * H0, accumulated_friction_loss=0.0)

    def _fric(self, x, h):
        return self.dissipation(x, h) if self.dissipation else None

    def step(self, state: SystemState):
        spec, m, P, h, st = self.spec, self.mass, self.potential, self.h, self.settings
        kind = spec.kind
        diag = None
        log = []
        if kind in ("asearch",):
            new, diag, self._signs = step_asearch(state, m, P, self._fric(state.x, h), h, spec, st, self._signs)
        elif kind in ("a1", "a_alpha"):
            alpha = 1.0 if kind == "a1" else spec.alpha
            new, diag = step_a_alpha(state, m, P, self._fric(state.x, h), h, alpha, st)
        elif kind == "blending":
            new, diag = step_blending(state, m, P, h, st, log=log)
        elif kind == "bdf2":
            new = step_bdf2(state, self.history, m, P, h, self.dissipation, st, log)
            self.history = History.of(state)
        elif kind == "implicit_euler":
            fric = self._fric(state.x, h)
            new, _, rep = _implicit_euler(state, m, P, h, fric, st)
            loss = 2.0 * fric.energy(new.x) if fric is not None else 0.0
            new = new.evolve(accumulated_friction_loss=loss, energy_target=state.energy_target - loss)
            diag = StepDiagnostics(newton_iters=rep.iterations, friction_loss=loss)
        elif kind == "explicit_euler":
            new = step_explicit_euler(state, m, P, h)
        elif kind == "symplectic_euler":
            new = step_symplectic_euler(state, m, P, h)
        elif kind == "theta_inner":
            new = step_theta_inner(state, m, P, h, spec.theta, st, log)
        elif kind == "theta_outer":
            new = step_theta_outer(state, m, P, h, spec.theta, st, log)
        elif kind == "midpoint":
            new = step_midpoint(state, m, P, h, st, log)
        elif kind == "trapezoidal":
            new = step_trapezoidal(state, m, P, h, st, log)
        else:  # pragma: no cover - guarded by IntegratorSpec
            raise ValueError(kind)
        if diag is None:
            diag = StepDiagnostics(target=state.energy_target)
        if log:
            diag.newton_iters = sum(r.iterations for r in log)
        if not np.isfinite(diag.energy_after):
            diag.energy_after = _energy(m, P, new.x, new.v)
        if not np.isfinite(diag.target):
            diag.target = new.energy_target
        return new, diag
