"""Flat-coordinate state, lumped mass and potential abstractions."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class InfeasibleStateError(ValueError):
    pass


@dataclass(frozen=True)
class SystemState:
    """Positions and velocities of one simulated system plus energy bookkeeping.

    ``energy_target`` is the energy level the state is supposed to carry and
    ``accumulated_friction_loss`` the dissipation estimate of the step that
    produced it.
    """

    x: np.ndarray
    v: np.ndarray
    t: float = 0.0
    energy_target: float = float("nan")
    accumulated_friction_loss: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if x.size == 0 or x.shape != v.shape:
            raise ValueError(f"x and v must have equal nonzero length, got {x.size} and {v.size}")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def ndof(self) -> int:
        return self.x.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v)))

    def evolve(self, **changes) -> "SystemState":
        return replace(self, **changes)


@dataclass(frozen=True)
class MassMatrix:
    """Lumped (diagonal) mass matrix."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.array(self.diag, dtype=float).ravel()
        if d.size == 0 or not np.all(d > 0):
            raise ValueError("lumped masses must all be positive")
        d.flags.writeable = False
        object.__setattr__(self, "diag", d)

    @classmethod
    def uniform(cls, m: float, n: int) -> "MassMatrix":
        return cls(np.full(n, float(m)))

    @property
    def total(self) -> float:
        return float(self.diag.sum())

    def __len__(self):
        return self.diag.size


class Potential:
    """Energy term over flat coordinates.

    Subclasses implement ``energy``, ``gradient`` and ``hessian``. Outside its
    domain a potential returns ``inf`` energy instead of raising.
    """

    #: True when the Hessian is PSD everywhere on the feasible set, so the
    #: solver may skip eigenvalue clamping.
    convex = False

    def energy(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def feasible(self, x: np.ndarray) -> bool:
        return bool(np.isfinite(self.energy(x)))

    def projected_hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian with negative eigenvalues clamped to zero."""
        H = self.hessian(x)
        if self.convex:
            return H
        return project_psd(H)

    def __add__(self, other: "Potential") -> "CompositePotential":
        return CompositePotential([(self, 1.0), (other, 1.0)])


def project_psd(H: np.ndarray, floor: float = 0.0) -> np.ndarray:
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    if w[0] >= floor:
        return H
    w = np.maximum(w, floor)
    return (V * w) @ V.T


class ZeroPotential(Potential):
    convex = True

    def __init__(self, ndof: int):
        self.ndof = ndof

    def energy(self, x):
        return 0.0

    def gradient(self, x):
        return np.zeros_like(x, dtype=float)

    def hessian(self, x):
        n = len(x)
        return np.zeros((n, n))


@dataclass
class CompositePotential(Potential):
    """Weighted sum of potentials; feasible iff every part is."""

    parts: list = field(default_factory=list)

    def __post_init__(self):
        flat = []
        for p, w in self.parts:
            if isinstance(p, CompositePotential):
                flat.extend((q, w * wq) for q, wq in p.parts)
            else:
                flat.append((p, float(w)))
        self.parts = flat

    @property
    def convex(self):
        return all(p.convex and w >= 0 for p, w in self.parts)

    def energy(self, x):
        total = 0.0
        for p, w in self.parts:
            e = p.energy(x)
            if not np.isfinite(e):
                return np.inf
            total += w * e
        return total

    def gradient(self, x):
        g = np.zeros(len(x))
        for p, w in self.parts:
            g += w * p.gradient(x)
        return g

    def hessian(self, x):
        n = len(x)
        H = np.zeros((n, n))
        for p, w in self.parts:
            H += w * p.hessian(x)
        return H

    def feasible(self, x):
        return all(p.feasible(x) for p, _ in self.parts)

    def projected_hessian(self, x):
        # clamp part by part, as in projected Newton for sums of element energies
        n = len(x)
        H = np.zeros((n, n))
        for p, w in self.parts:
            H += w * p.projected_hessian(x) if w >= 0 else w * p.hessian(x)
        return H

    def __add__(self, other):
        return CompositePotential(self.parts + [(other, 1.0)])


def kinetic_energy(v, m) -> float:
    diag = m.diag if isinstance(m, MassMatrix) else np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != diag.shape:
        raise ValueError("velocity and mass lengths differ")
    return 0.5 * float(np.dot(diag * v, v))


def total_energy(state: SystemState, m: MassMatrix, p: Potential) -> float:
    pe = p.energy(state.x)
    if not np.isfinite(pe):
        raise InfeasibleStateError("infeasible state")
    return kinetic_energy(state.v, m) + pe


def fd_step(x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def fd_gradient(f, x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    steps = fd_step(x, rel)
    g = np.empty_like(x)
    for i, s in enumerate(steps):
        xp = x.copy()
        xm = x.copy()
        xp[i] += s
        xm[i] -= s
        g[i] = (f(xp) - f(xm)) / (2 * s)
    return g


def fd_jacobian(F, x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a vector function, rows = outputs."""
    x = np.asarray(x, dtype=float)
    steps = fd_step(x, rel)
    cols = []
    for i, s in enumerate(steps):
        xp = x.copy()
        xm = x.copy()
        xp[i] += s
        xm[i] -= s
        cols.append((np.asarray(F(xp)) - np.asarray(F(xm))) / (2 * s))
    return np.stack(cols, axis=1)


def relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / scale)


def check_gradient(p: Potential, x, rtol: float = 1e-5) -> float:
    """Relative error between analytic and finite-difference gradient; raises above ``rtol``."""
    err = relative_error(p.gradient(x), fd_gradient(p.energy, x))
    if err > rtol:
        raise AssertionError(f"gradient mismatch {err:.3e} > {rtol:g} for {type(p).__name__}")
    return err


def check_hessian(p: Potential, x, rtol: float = 1e-4) -> float:
    H = p.hessian(x)
    sym = relative_error(H, H.T, floor=1e-300)
    if sym > 1e-10:
        raise AssertionError(f"hessian asymmetric ({sym:.3e}) for {type(p).__name__}")
    err = relative_error(H, fd_jacobian(p.gradient, x))
    if err > rtol:
        raise AssertionError(f"hessian mismatch {err:.3e} > {rtol:g} for {type(p).__name__}")
    return err
