"""Optimization-based time integration with energy-targeting velocity correction.

The decoupled α-method family (A-1 with α = 1, A-search with α chosen per
step to hit an energy target) on top of implicit Euler, classical baselines,
and analysis tools for linear stability, barrier collisions and modal energy.
"""
from .core import InfeasibleStateError, MassMatrix, Potential, SystemState, kinetic_energy, total_energy
from .integrators import DecaySpec, Integrator, IntegratorSpec, StepDiagnostics
from .solver import NewtonSettings, SolverError

__all__ = [
    "DecaySpec",
    "InfeasibleStateError",
    "Integrator",
    "IntegratorSpec",
    "MassMatrix",
    "NewtonSettings",
    "Potential",
    "SolverError",
    "StepDiagnostics",
    "SystemState",
    "kinetic_energy",
    "total_energy",
]

__version__ = "0.1.0"
