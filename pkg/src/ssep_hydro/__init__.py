"""Simulation and verification toolkit for the boundary-driven symmetric
exclusion process with a non-reversible left boundary block."""

__version__ = "0.1.0"

from .errors import NonUniqueStationary, SizeLimit, Unsupported
from .model import (
    LatticeSpec,
    ModelSpec,
    RateTableBoundary,
    StructuredBoundary,
    sample_initial,
    spec_from_json,
    spec_to_json,
    structured_spec,
    table_spec,
)
from .boundary import (
    boundary_report,
    build_chain,
    check_a1,
    check_a2,
    invariant_measure,
    left_density,
)
from .fields import (
    CorrelationField,
    DensityField,
    GradientField,
    gradient,
    solve_correlation,
    solve_density,
)
from .heat import HeatSolution, solve_heat, theta
from .kmc import EnsembleStats, Trajectory, ensemble_stats, flip_rate_table, simulate
from .oracle import FullDistribution, evolve_exact, exact_moments
from .walks import (
    duality_density,
    dual_rates,
    hitting_window_prob,
    reflection_window_prob,
)
from .studies import StudyConfig, StudyReport, default_config, load_config

__all__ = [
    "CorrelationField",
    "DensityField",
    "EnsembleStats",
    "FullDistribution",
    "GradientField",
    "HeatSolution",
    "LatticeSpec",
    "ModelSpec",
    "NonUniqueStationary",
    "RateTableBoundary",
    "SizeLimit",
    "StructuredBoundary",
    "StudyConfig",
    "StudyReport",
    "Trajectory",
    "Unsupported",
    "__version__",
    "boundary_report",
    "build_chain",
    "check_a1",
    "check_a2",
    "default_config",
    "dual_rates",
    "duality_density",
    "ensemble_stats",
    "evolve_exact",
    "exact_moments",
    "flip_rate_table",
    "gradient",
    "hitting_window_prob",
    "invariant_measure",
    "left_density",
    "load_config",
    "reflection_window_prob",
    "sample_initial",
    "simulate",
    "solve_correlation",
    "solve_density",
    "solve_heat",
    "spec_from_json",
    "spec_to_json",
    "structured_spec",
    "table_spec",
    "theta",
]
