"""Butcher tableaux: adjoints, the symplecticity condition and stability functions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POLE_TOL = 1e-14


class PoleError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class Tableau:
    A: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape != (b.size, b.size):
            raise ValueError(f"A must be {b.size}x{b.size}, got {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def c(self) -> np.ndarray:
        return self.A.sum(axis=1)

    @property
    def is_explicit(self) -> bool:
        return bool(np.allclose(np.triu(self.A), 0.0))

    @property
    def stiffly_accurate(self) -> bool:
        return bool(np.allclose(self.A[-1], self.b))


@dataclass(frozen=True)
class StabilitySample:
    z: complex
    R: complex


def adjoint(t: Tableau) -> Tableau:
    """Adjoint tableau (e bᵀ - A, b); stages are not reflected."""
    e = np.ones(t.stages)
    name = t.name[:-1] if t.name.endswith("*") else (t.name + "*" if t.name else "")
    return Tableau(np.outer(e, t.b) - t.A, t.b.copy(), name)


def is_symplectic(t: Tableau, tol: float = 1e-12) -> bool:
    B = np.diag(t.b)
    M = B @ t.A + t.A.T @ B - np.outer(t.b, t.b)
    return bool(np.max(np.abs(M)) <= tol)


def _det_checked(M: np.ndarray) -> complex:
    d = np.linalg.det(M)
    scale = max(1.0, float(np.prod(np.linalg.norm(M, axis=1))))
    if abs(d) < POLE_TOL * scale:
        raise PoleError("pole of R")
    return d


def stability_function(t: Tableau, z: complex) -> complex:
    """R(z) = det(I + z A†) / det(I - z A)."""
    I = np.eye(t.stages)
    At = adjoint(t).A
    den = _det_checked(I - z * t.A)
    return complex(np.linalg.det(I + z * At) / den)


def stability_function_classic(t: Tableau, z: complex) -> complex:
    """R(z) = 1 + z bᵀ (I - z A)⁻¹ e, used as a cross-check of the determinant form."""
    I = np.eye(t.stages)
    _det_checked(I - z * t.A)
    return complex(1.0 + z * t.b @ np.linalg.solve(I - z * t.A, np.ones(t.stages)))


def sample(t: Tableau, z: complex) -> StabilitySample:
    return StabilitySample(complex(z), stability_function(t, z))


def rk_linear_step_matrix(t: Tableau, L: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Matrix of one RK step applied to the linear system z' = L z.

    Solves the stage system (I - h A⊗L) K = (e⊗L) z for each basis vector.
    """
    L = np.asarray(L, dtype=float)
    d = L.shape[0]
    s = t.stages
    S = np.eye(s * d) - h * np.kron(t.A, L)
    rhs = np.kron(np.ones((s, 1)), L)
    if np.linalg.cond(S) > 1.0 / POLE_TOL:
        raise PoleError("pole of R")
    K = np.linalg.solve(S, rhs)
    return np.eye(d) + h * np.kron(t.b[None, :], np.eye(d)) @ K


GAMMA_SDIRK2 = 1.0 - 1.0 / np.sqrt(2.0)

EXPLICIT_EULER = Tableau([[0.0]], [1.0], "explicit_euler")
IMPLICIT_EULER = Tableau([[1.0]], [1.0], "implicit_euler")
IMPLICIT_MIDPOINT = Tableau([[0.5]], [1.0], "midpoint")
TRAPEZOIDAL = Tableau([[0.0, 0.0], [0.5, 0.5]], [0.5, 0.5], "trapezoidal")
SDIRK2 = Tableau(
    [[GAMMA_SDIRK2, 0.0], [1.0 - GAMMA_SDIRK2, GAMMA_SDIRK2]],
    [1.0 - GAMMA_SDIRK2, GAMMA_SDIRK2],
    "sdirk2",
)

CATALOG = {t.name: t for t in (EXPLICIT_EULER, IMPLICIT_EULER, IMPLICIT_MIDPOINT, TRAPEZOIDAL, SDIRK2)}


def get(name: str) -> Tableau:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown tableau {name!r}; known: {', '.join(CATALOG)}") from None
