"""Relapsing host/vector disease model: R0, equilibria, stability, simulation."""

from .exceptions import (
    ConvergenceError,
    CrossCheckError,
    DegeneratePopulationError,
    InvalidParametersError,
    NegativityError,
    RelapsingError,
)
from .model import (
    DimensionlessParams,
    Finding,
    ModelParams,
    StateVec,
    beta_host,
    beta_vector,
    from_dimensionless,
    manifold_residual,
    to_dimensionless,
    validate,
    vector_field,
)
from .reproduction import (
    NextGenPair,
    biting_rate_for_r0,
    build_next_gen,
    r0_closed_form,
    r0_spectral,
    r0_zero_mortality,
    with_r0,
)
from .equilibria import EquilibriumReport, NoEE, dfe, endemic_equilibrium, verify_equilibrium
from .stability import (
    BifurcationReport,
    CharPoly,
    bifurcation_coefficients,
    char_poly_dfe,
    classify_bifurcation,
    dfe_spectrum,
    jacobian,
)
from .simulate import Trajectory, integrate, logistic_check

__all__ = [
    "BifurcationReport",
    "CharPoly",
    "ConvergenceError",
    "CrossCheckError",
    "DegeneratePopulationError",
    "DimensionlessParams",
    "EquilibriumReport",
    "Finding",
    "InvalidParametersError",
    "ModelParams",
    "NegativityError",
    "NextGenPair",
    "NoEE",
    "RelapsingError",
    "StateVec",
    "Trajectory",
    "beta_host",
    "beta_vector",
    "bifurcation_coefficients",
    "biting_rate_for_r0",
    "build_next_gen",
    "char_poly_dfe",
    "classify_bifurcation",
    "dfe",
    "dfe_spectrum",
    "endemic_equilibrium",
    "from_dimensionless",
    "integrate",
    "jacobian",
    "logistic_check",
    "manifold_residual",
    "r0_closed_form",
    "r0_spectral",
    "r0_zero_mortality",
    "to_dimensionless",
    "validate",
    "vector_field",
    "verify_equilibrium",
    "with_r0",
]
