"""Spectral-Galerkin laboratory for the JMGT-Westervelt equation."""

__version__ = "0.1.0"

from .core import ForcingSpec, ModalState, PhysicalParams, SpectralBasis, build_basis  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    DegeneracyError,
    JMGTError,
    NearSingularError,
    NonConvergenceError,
)
from .timedomain import SolverConfig, Trajectory, periodic_steady_state, simulate_ivp  # noqa: E402

__all__ = [
    "ConfigError",
    "DegeneracyError",
    "ForcingSpec",
    "JMGTError",
    "ModalState",
    "NearSingularError",
    "NonConvergenceError",
    "PhysicalParams",
    "SolverConfig",
    "SpectralBasis",
    "Trajectory",
    "build_basis",
    "periodic_steady_state",
    "simulate_ivp",
]
