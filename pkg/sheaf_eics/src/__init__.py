"""
Effective-Information Consistency Score (EICS) for linearized circuits

Scores a circuit (a DAG of activation spaces joined by linear edge maps) from a
single activation state: sheaf inconsistency C_sh of the observed activations,
Gaussian effective-information emergence of the macro map over its parts, and
their composite EICS = normalized emergence / (1 + C_sh).
"""

from .settings import TOOL_VERSION

__version__ = TOOL_VERSION
__author__ = "sheaf_eics developers"

from .errors import CircuitError, ConfigError, EICSError, FileFormatError, NumericalError
from .linear_map import LinearMap
from .circuit import (
    ActivationState,
    Circuit,
    EdgeSpec,
    NodeSpec,
    PartSpec,
    Partition,
    forward_activations,
    macro_jacobian,
    part_jacobian,
    topological_order,
    validate_circuit,
    validate_partition,
)
from .sheaf import (
    Cochain1,
    EdgeWeighting,
    SheafReport,
    circuit_spectral_gap,
    coboundary_apply,
    least_squares_section,
    sheaf_inconsistency,
    sheaf_laplacian,
    spectral_gap,
    stability_bound_check,
)
from .ei import EIConfig, EIReport, delta_ei, ei_alpha_sensitivity, ei_gaussian, ei_small_alpha, select_alpha
from .eics import EICSResult, ScoreOptions, eics_score, threshold_select
from .baselines import ActivationBatch, eac, ear
from .toy import ToyConfig, build_toy_circuit, metrics_at_tau, sweep
from .file_formats import load_circuit, load_result, save_circuit, save_result

__all__ = [
    "EICSError",
    "CircuitError",
    "FileFormatError",
    "ConfigError",
    "NumericalError",
    "LinearMap",
    "Circuit",
    "NodeSpec",
    "EdgeSpec",
    "ActivationState",
    "PartSpec",
    "Partition",
    "validate_circuit",
    "validate_partition",
    "topological_order",
    "macro_jacobian",
    "part_jacobian",
    "forward_activations",
    "Cochain1",
    "EdgeWeighting",
    "SheafReport",
    "coboundary_apply",
    "sheaf_inconsistency",
    "least_squares_section",
    "sheaf_laplacian",
    "spectral_gap",
    "circuit_spectral_gap",
    "stability_bound_check",
    "EIConfig",
    "EIReport",
    "ei_gaussian",
    "ei_small_alpha",
    "ei_alpha_sensitivity",
    "delta_ei",
    "select_alpha",
    "EICSResult",
    "ScoreOptions",
    "eics_score",
    "threshold_select",
    "ActivationBatch",
    "eac",
    "ear",
    "ToyConfig",
    "build_toy_circuit",
    "metrics_at_tau",
    "sweep",
    "load_circuit",
    "save_circuit",
    "save_result",
    "load_result",
]
