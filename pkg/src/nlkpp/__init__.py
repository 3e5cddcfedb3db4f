"""Nonlocal-dispersal Fisher-KPP laboratory."""

from .almost_periodic import (
    APCoefficient,
    SpatialMode,
    SpatialProfile,
    TemporalMode,
    bohr_fourier_coeff,
    epsilon_translation_numbers,
    module_containment_check,
    space_mean,
    time_mean,
)
from .dynamics import (
    contraction_check,
    extinction_check,
    ode_pullback,
    part_metric,
    pullback_entire_solution,
    stability_check,
    uniqueness_check,
)
from .evolution import Model, Reaction, linear_propagate, solve, step
from .kernel_domain import Bump, Domain, Gaussian, apply_dispersal, build_domain, sample_kernel
from .spectral import lyapunov_exponent, pe_lower_bounds, principal_eigenvalue_static, relation_audit

__version__ = "0.1.0"

__all__ = [
    "APCoefficient",
    "Bump",
    "Domain",
    "Gaussian",
    "Model",
    "Reaction",
    "SpatialMode",
    "SpatialProfile",
    "TemporalMode",
    "apply_dispersal",
    "bohr_fourier_coeff",
    "build_domain",
    "contraction_check",
    "epsilon_translation_numbers",
    "extinction_check",
    "linear_propagate",
    "lyapunov_exponent",
    "module_containment_check",
    "ode_pullback",
    "part_metric",
    "pe_lower_bounds",
    "principal_eigenvalue_static",
    "pullback_entire_solution",
    "relation_audit",
    "sample_kernel",
    "solve",
    "space_mean",
    "stability_check",
    "step",
    "time_mean",
    "uniqueness_check",
]
