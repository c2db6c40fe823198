"""Concrete energies used by the test scenes, plus friction/damping pseudo-potentials.

All potentials act on flat coordinate vectors. A ``dofs`` argument restricts
a per-dof term to a subset of coordinates (``None`` means every coordinate).
"""
from __future__ import annotations

import numpy as np

from .core import InfeasibleStateError, Potential, project_psd

DEFAULT_KAPPA = 1e5
DEFAULT_DHAT = 1e-3


def _select(dofs, n):
    if dofs is None:
        return slice(None)
    return np.asarray(dofs, dtype=int)


class QuadraticSpring(Potential):
    """Ground spring ½k(x - rest)² on each selected dof."""

    convex = True

    def __init__(self, k: float, rest: float = 0.0, dofs=None):
        if k <= 0:
            raise ValueError("spring stiffness must be positive")
        self.k = float(k)
        self.rest = float(rest)
        self.dofs = dofs

    def energy(self, x):
        d = x[_select(self.dofs, len(x))] - self.rest
        return 0.5 * self.k * float(np.dot(d, d))

    def gradient(self, x):
        g = np.zeros(len(x))
        idx = _select(self.dofs, len(x))
        g[idx] = self.k * (x[idx] - self.rest)
        return g

    def hessian(self, x):
        n = len(x)
        diag = np.zeros(n)
        diag[_select(self.dofs, n)] = self.k
        return np.diag(diag)


class OneSidedQuadraticBarrier(Potential):
    """½k s² on the active side of a wall, zero on the other (C¹ at the wall).

    ``orientation=+1`` penalises ``x > wall``, ``-1`` penalises ``x < wall``.
    """

    convex = True

    def __init__(self, k: float, orientation: int = 1, wall: float = 0.0, dofs=None):
        if k <= 0:
            raise ValueError("barrier stiffness must be positive")
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        self.k = float(k)
        self.orientation = orientation
        self.wall = float(wall)
        self.dofs = dofs

    def _pen(self, x):
        s = x[_select(self.dofs, len(x))] - self.wall
        return np.where(self.orientation * s > 0, s, 0.0)

    def active(self, x) -> np.ndarray:
        s = x[_select(self.dofs, len(x))] - self.wall
        return self.orientation * s > 0

    def energy(self, x):
        s = self._pen(x)
        return 0.5 * self.k * float(np.dot(s, s))

    def gradient(self, x):
        g = np.zeros(len(x))
        g[_select(self.dofs, len(x))] = self.k * self._pen(x)
        return g

    def hessian(self, x):
        n = len(x)
        diag = np.zeros(n)
        diag[_select(self.dofs, n)] = self.k * self.active(x)
        return np.diag(diag)


class IpcBarrier1D(Potential):
    """Log barrier -κ (d/d̂ - 1)² log(d/d̂) against a wall.

    The distance of coordinate x is ``d = side * (x - wall)``; the term is
    zero for d ≥ d̂ and infinite for d ≤ 0.
    """

    convex = True

    def __init__(self, kappa: float = DEFAULT_KAPPA, dhat: float = DEFAULT_DHAT,
                 wall: float = 0.0, side: int = 1, dofs=None):
        if kappa <= 0 or dhat <= 0:
            raise ValueError("kappa and dhat must be positive")
        if side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        self.kappa = float(kappa)
        self.dhat = float(dhat)
        self.wall = float(wall)
        self.side = side
        self.dofs = dofs

    def distance(self, x):
        return self.side * (x[_select(self.dofs, len(x))] - self.wall)

    def feasible(self, x):
        return bool(np.all(self.distance(x) > 0))

    def energy(self, x):
        d = self.distance(x)
        if d.min() <= 0:
            return np.inf
        s = d[d < self.dhat] / self.dhat
        if s.size == 0:
            return 0.0
        return float(-self.kappa * np.sum((s - 1.0) ** 2 * np.log(s)))

    def _dd(self, x):
        """First and second derivatives of the barrier w.r.t. distance, per selected dof."""
        d = self.distance(x)
        g = np.zeros_like(d)
        h = np.zeros_like(d)
        act = (d < self.dhat) & (d > 0)
        if act.any():
            s = d[act] / self.dhat
            ls = np.log(s)
            g[act] = -self.kappa / self.dhat * (2 * (s - 1) * ls + (s - 1) ** 2 / s)
            h[act] = -self.kappa / self.dhat**2 * (2 * ls + 4 * (s - 1) / s - (s - 1) ** 2 / s**2)
        return g, h

    def gradient(self, x):
        gd, _ = self._dd(x)
        g = np.zeros(len(x))
        g[_select(self.dofs, len(x))] = self.side * gd
        return g

    def hessian(self, x):
        _, hd = self._dd(x)
        n = len(x)
        diag = np.zeros(n)
        diag[_select(self.dofs, n)] = hd
        return np.diag(diag)

    def normal_force(self, x) -> np.ndarray:
        """Magnitude of the barrier force on each coordinate (zero outside d̂)."""
        return np.abs(self.gradient(x))


class NeoHookeanChain1D(Potential):
    """1D Neo-Hookean rod discretised into linear elements over consecutive nodes.

    Per element of rest length ``l0`` and stretch ``F = l / l0`` the energy is
    ``l0 * (E/4)(F² - 1 - 2 log F)``; ``youngs_modulus`` is force-like (the
    cross section is folded in), so the wave speed is ``sqrt(E / rho)`` with
    ``rho`` the mass per unit length.
    """

    convex = True

    def __init__(self, n_nodes: int, rest_length: float, youngs_modulus: float, masses=None):
        if n_nodes < 2:
            raise ValueError("a chain needs at least two nodes")
        if rest_length <= 0 or youngs_modulus <= 0:
            raise ValueError("rest length and modulus must be positive")
        self.n_nodes = int(n_nodes)
        self.rest_length = float(rest_length)
        self.youngs_modulus = float(youngs_modulus)
        self.masses = None if masses is None else np.asarray(masses, dtype=float)

    @classmethod
    def from_rod(cls, length: float, n_elements: int, total_mass: float, wave_speed: float):
        """Uniform rod with lumped masses and modulus chosen so sqrt(E/rho) = wave_speed."""
        l0 = length / n_elements
        rho = total_mass / length
        masses = np.full(n_elements + 1, rho * l0)
        masses[[0, -1]] *= 0.5
        return cls(n_elements + 1, l0, rho * wave_speed**2, masses)

    @property
    def n_elements(self):
        return self.n_nodes - 1

    def rest_positions(self, origin: float = 0.0) -> np.ndarray:
        return origin + self.rest_length * np.arange(self.n_nodes)

    def stretches(self, x):
        n = self.n_nodes
        return (x[1:n] - x[: n - 1]) * (1.0 / self.rest_length)

    def feasible(self, x):
        return bool(np.all(self.stretches(x) > 0))

    def energy(self, x):
        F = self.stretches(x)
        if F.min() <= 0:
            return np.inf
        E = self.youngs_modulus
        return float(self.rest_length * 0.25 * E * np.sum(F * F - 1.0 - 2.0 * np.log(F)))

    def gradient(self, x):
        F = self.stretches(x)
        stress = 0.5 * self.youngs_modulus * (F - 1.0 / F)
        g = np.zeros(len(x))
        g[: self.n_nodes - 1] -= stress
        g[1 : self.n_nodes] += stress
        return g

    def element_stiffness(self, x):
        F = self.stretches(x)
        return 0.5 * self.youngs_modulus * (1.0 + 1.0 / (F * F)) / self.rest_length

    def hessian(self, x):
        ke = self.element_stiffness(x)
        n = len(x)
        diag = np.zeros(n)
        diag[: self.n_nodes - 1] += ke
        diag[1 : self.n_nodes] += ke
        H = np.diag(diag)
        i = np.arange(self.n_nodes - 1)
        H[i, i + 1] = -ke
        H[i + 1, i] = -ke
        return H


class Gravity(Potential):
    """Uniform gravity: energy g * sum m_i * x_i along one axis of interleaved coordinates."""

    convex = True

    def __init__(self, masses, g: float = 9.8, dim: int = 1, axis: int = 0):
        self.masses = np.asarray(masses, dtype=float)
        self.g = float(g)
        self.dim = int(dim)
        self.axis = int(axis)

    def _weights(self, n):
        w = np.zeros(n)
        w[self.axis :: self.dim] = self.g * self.masses[self.axis :: self.dim]
        return w

    def energy(self, x):
        return float(np.dot(self._weights(len(x)), x))

    def gradient(self, x):
        return self._weights(len(x))

    def hessian(self, x):
        n = len(x)
        return np.zeros((n, n))


class CentralSpring2D(Potential):
    """Spring ½k(|p - pivot| - r0)² tying every 2D point to a fixed pivot."""

    def __init__(self, k: float, r0: float, pivot=(0.0, 0.0)):
        self.k = float(k)
        self.r0 = float(r0)
        self.pivot = np.asarray(pivot, dtype=float)

    def _rel(self, x):
        return x.reshape(-1, 2) - self.pivot

    def energy(self, x):
        r = np.linalg.norm(self._rel(x), axis=1)
        return 0.5 * self.k * float(np.sum((r - self.r0) ** 2))

    def gradient(self, x):
        d = self._rel(x)
        r = np.linalg.norm(d, axis=1)
        return (self.k * ((r - self.r0) / r)[:, None] * d).ravel()

    def hessian(self, x):
        d = self._rel(x)
        n = len(x)
        H = np.zeros((n, n))
        for i, di in enumerate(d):
            r = np.linalg.norm(di)
            u = di / r
            block = self.k * ((1.0 - self.r0 / r) * np.eye(2) + (self.r0 / r) * np.outer(u, u))
            H[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = block
        return H


class _AnchoredQuadratic(Potential):
    """(μh/2) ‖(x - anchor)/h‖²_W for a PSD weight matrix W."""

    convex = True

    def __init__(self, mu: float, W: np.ndarray, anchor, h: float):
        self.mu = float(mu)
        self.W = W
        self.anchor = np.asarray(anchor, dtype=float).copy()
        self.h = float(h)
        self._c = self.mu / self.h

    def energy(self, x):
        d = x - self.anchor
        return 0.5 * self._c * float(d @ (self.W @ d))

    def gradient(self, x):
        return self._c * (self.W @ (x - self.anchor))

    def hessian(self, x):
        return self._c * self.W


class RayleighDampingPseudoPotential(_AnchoredQuadratic):
    """Semi-implicit Rayleigh damping with the stiffness frozen at the step start."""


class CoulombFrictionPseudoPotential(Potential):
    """Per-dof drag μ λ_i v_i written as the pseudo-potential (μh/2)‖(x - x_n)/h‖²_λ."""

    convex = True

    def __init__(self, mu: float, lambda_n, anchor, h: float):
        lam = np.asarray(lambda_n, dtype=float)
        if np.any(lam < 0):
            raise ValueError("normal force weights must be nonnegative")
        self.mu = float(mu)
        self.lambda_n = lam
        self.anchor = np.asarray(anchor, dtype=float).copy()
        self.h = float(h)

    def energy(self, x):
        d = x - self.anchor
        return 0.5 * self.mu / self.h * float(np.dot(self.lambda_n * d, d))

    def gradient(self, x):
        return self.mu / self.h * self.lambda_n * (x - self.anchor)

    def hessian(self, x):
        return np.diag(self.mu / self.h * self.lambda_n)


def ipc_normal_force_weights(x, barrier: IpcBarrier1D) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not barrier.feasible(x):
        raise InfeasibleStateError("infeasible state: coordinate at or behind the wall")
    return barrier.normal_force(x)


def build_rayleigh(mu: float, base: Potential, x_n, h: float, mass=None) -> RayleighDampingPseudoPotential:
    """Damping pseudo-potential whose gradient is μ K_n (x - x_n)/h, K_n = PSD part of base's Hessian at x_n.

    With ``mass`` given the weight is the mass matrix instead (mass-proportional
    damping, for which ``mu`` has units of 1/s).
    """
    x_n = np.asarray(x_n, dtype=float)
    if mass is not None:
        W = np.diag(np.asarray(getattr(mass, "diag", mass), dtype=float))
    elif mu == 0.0:
        W = np.zeros((len(x_n), len(x_n)))
    else:
        W = base.hessian(x_n) if base.convex else project_psd(base.hessian(x_n))
    return RayleighDampingPseudoPotential(mu, W, x_n, h)


def build_coulomb(mu: float, barrier: IpcBarrier1D, x_n, h: float) -> CoulombFrictionPseudoPotential:
    return CoulombFrictionPseudoPotential(mu, ipc_normal_force_weights(x_n, barrier), x_n, h)
