"""Projected Newton with a feasibility-filtered backtracking line search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InfeasibleStateError, Potential


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class NewtonSettings:
    # tolerance on the Newton step is step_tolerance_scale * h * (1 m/s), infinity norm
    step_tolerance_scale: float = 0.01
    max_iterations: int = 200
    shrink: float = 0.5
    armijo: float = 1e-4
    psd_floor: float = 0.0
    max_halvings: int = 60
    # overrides the h-scaled tolerance (length units); used by large-ħ harnesses
    absolute_tolerance: float | None = None
    # additionally require the force imbalance, as a velocity h·m⁻¹·residual, to be
    # below this many m/s; None disables the check
    residual_tolerance: float | None = 0.01

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.step_tolerance_scale <= 0 or self.max_iterations <= 0 or self.armijo <= 0:
            raise ValueError("Newton settings must be positive")


@dataclass
class SolveReport:
    iterations: int = 0
    step_norm: float = np.inf
    halvings: int = 0
    converged: bool = False
    tolerance: float = 0.0


class IncrementalPotential:
    """½‖x - x̃‖²_m + c·P(x), the objective of every implicit step in this package."""

    def __init__(self, mass_diag: np.ndarray, target: np.ndarray, weight: float, potential: Potential):
        self.m = mass_diag
        self.target = target
        self.c = float(weight)
        self.potential = potential

    def value(self, x):
        pe = self.potential.energy(x) if self.c != 0.0 else 0.0
        if not np.isfinite(pe):
            return np.inf
        d = x - self.target
        return 0.5 * float(np.dot(self.m * d, d)) + self.c * pe

    def gradient(self, x):
        g = self.m * (x - self.target)
        if self.c != 0.0:
            g = g + self.c * self.potential.gradient(x)
        return g

    def hessian(self, x):
        H = np.diag(self.m)
        if self.c != 0.0:
            H = H + self.c * self.potential.projected_hessian(x)
        return H


def minimize_incremental_potential(x0, objective, settings: NewtonSettings | None = None,
                                   h: float = 1.0, tol: float | None = None):
    """Minimise ``objective`` from ``x0``; returns ``(x, SolveReport)``.

    Every accepted iterate has finite objective: trial points outside the
    feasible set are halved away before the Armijo test.
    """
    settings = settings or NewtonSettings()
    if tol is None:
        tol = settings.absolute_tolerance
    if tol is None:
        tol = settings.step_tolerance_scale * h * 1.0
    x = np.array(x0, dtype=float)
    f = objective.value(x)
    if not np.isfinite(f):
        raise InfeasibleStateError("initial point infeasible")
    report = SolveReport(tolerance=tol)
    mh = np.asarray(objective.m, dtype=float) * h
    rtol = settings.residual_tolerance
    for _ in range(settings.max_iterations):
        g = objective.gradient(x)
        H = objective.hessian(x)
        dx = np.linalg.solve(H, -g)
        report.iterations += 1
        report.step_norm = float(np.max(np.abs(dx)))
        small = report.step_norm <= tol
        if small and (rtol is None or float(np.max(np.abs(g / mh))) <= rtol):
            # the last step is within tolerance; keep it only if it does not increase the objective
            xt = x + dx
            ft = objective.value(xt)
            if np.isfinite(ft) and ft <= f:
                x = xt
            report.converged = True
            return x, report
        slope = float(np.dot(g, dx))
        # objective changes below its own rounding level cannot be resolved
        slack = 16.0 * np.finfo(float).eps * abs(f)
        alpha = 1.0
        for _ in range(settings.max_halvings):
            xt = x + alpha * dx
            ft = objective.value(xt)
            if np.isfinite(ft) and ft <= f + settings.armijo * alpha * slope + slack:
                break
            alpha *= settings.shrink
            report.halvings += 1
        else:
            # no descent left at machine precision; accept if the step test already holds
            report.converged = small
            return x, report
        x, f = xt, ft
    return x, report
