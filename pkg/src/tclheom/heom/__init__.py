"""Hierarchical equations of motion for diagonal system-bath couplings."""
from .hierarchy import (
    Hierarchy,
    HierarchyState,
    HierarchyTooLarge,
    ModeTable,
    enumerate_indices,
    hierarchy_size,
)
from .kernels import active_backend, set_backend
from .solver import (
    HeomSolver,
    IntegratorConfig,
    NumericalError,
    Trajectory,
    equilibrate_bath,
    heom_rhs,
    propagate,
    rk4_stepper,
)

__all__ = [
    "Hierarchy", "HierarchyState", "HierarchyTooLarge", "ModeTable",
    "enumerate_indices", "hierarchy_size", "active_backend", "set_backend",
    "HeomSolver", "IntegratorConfig", "NumericalError", "Trajectory",
    "equilibrate_bath", "heom_rhs", "propagate", "rk4_stepper",
]
