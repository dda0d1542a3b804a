"""Exact time-convolutionless generators from hierarchical equations of motion."""
from .bath import BathSpec, ExpMode, correlation, expand_correlation, spectral_density
from .heom import HeomSolver, HierarchyState, IntegratorConfig, NumericalError
from .model import SpinBosonParams, SystemModel, build_spin_boson, exciton_model, load_exciton_model
from .tcl import (
    assemble_propagators,
    critical_delta_sweep,
    detect_singularities,
    exact_generator,
    expand_generator,
    generator_expansion,
    propagate_tcl,
    second_order_generator,
)

__version__ = "0.1.0"

__all__ = [
    "BathSpec", "ExpMode", "correlation", "expand_correlation", "spectral_density",
    "HeomSolver", "HierarchyState", "IntegratorConfig", "NumericalError",
    "SpinBosonParams", "SystemModel", "build_spin_boson", "exciton_model", "load_exciton_model",
    "assemble_propagators", "critical_delta_sweep", "detect_singularities", "exact_generator",
    "expand_generator", "generator_expansion", "propagate_tcl", "second_order_generator",
]
