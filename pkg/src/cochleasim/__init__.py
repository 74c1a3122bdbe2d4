"""Active cochlea chamber model: 2-D pressure chamber coupled to a
nonlinear membrane line, its depth-averaged limit, and the verification
tooling around them."""

from .model import (
    EXP_RAYLEIGH,
    Forcing,
    Grid,
    MembraneState,
    ModelParams,
    Nonlinearity,
    PASSIVE,
    RhoField,
    StiffnessProfile,
    TANH_RAYLEIGH,
    ValidationReport,
    forcing_at,
    nonlin_deriv,
    nonlin_eval,
    resonance_location,
    stiffness_at,
    validate_params,
)
from .spectral import (
    PressureField,
    bottom_pressure,
    depth_average,
    dst_forward,
    dst_inverse,
    ndt_symbol,
    reconstruct_pressure_field,
)
from .solver import (
    InstabilityError,
    SimulationTrace,
    SpectralEngine,
    acceleration_solve,
    damped_oscillator_closed_form,
    passive_steady_state_oracle,
    simulate,
    step,
)
from .fdref import (
    Laplace2DProblem,
    fd_full_coupled_accel_solve,
    fd_full_pressure_solve,
    fd_reduced_accel_solve,
)
from .diagnostics import (
    EnergyReport,
    amplification_ratio,
    energy_audit,
    envelope_and_peaks,
    fit_convergence_order,
    interaction_energy,
    model_error_norms,
    otoacoustic_metric,
)
from .cli import ConfigError, load_config, run_scenario, write_outputs

__version__ = "0.1.0"

__all__ = [
    "EXP_RAYLEIGH", "PASSIVE", "TANH_RAYLEIGH",
    "Forcing", "Grid", "MembraneState", "ModelParams", "Nonlinearity",
    "RhoField", "StiffnessProfile", "ValidationReport",
    "forcing_at", "nonlin_deriv", "nonlin_eval", "resonance_location",
    "stiffness_at", "validate_params",
    "PressureField", "bottom_pressure", "depth_average", "dst_forward",
    "dst_inverse", "ndt_symbol", "reconstruct_pressure_field",
    "InstabilityError", "SimulationTrace", "SpectralEngine",
    "acceleration_solve", "damped_oscillator_closed_form",
    "passive_steady_state_oracle", "simulate", "step",
    "Laplace2DProblem", "fd_full_coupled_accel_solve",
    "fd_full_pressure_solve", "fd_reduced_accel_solve",
    "EnergyReport", "amplification_ratio", "energy_audit",
    "envelope_and_peaks", "fit_convergence_order", "interaction_energy",
    "model_error_norms", "otoacoustic_metric",
    "ConfigError", "load_config", "run_scenario", "write_outputs",
    "__version__",
]
