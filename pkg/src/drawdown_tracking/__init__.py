"""Optimal tracking of a benchmark with capital injection under a consumption drawdown constraint."""

from .errors import (
    AssumptionViolated,
    ConfigError,
    ConsistencyWarning,
    ConvergenceError,
    DomainError,
    DrawdownTrackingError,
    NumericalBlowup,
    OutOfRegion,
    SingularSigma,
    SingularSystem,
)
from .params import DerivedConstants, ModelParams, utility, validate
from .boundary import FreeBoundary
from .dual import Coefficients, DualSolution
from .closed_form import NoDrawdownSolution
from .policy import PolicyPoint, PrimalPolicy, Region
from .simulate import SimConfig, SimPath, Simulator, dual_path_check, reconstruct

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolated",
    "Coefficients",
    "ConfigError",
    "ConsistencyWarning",
    "ConvergenceError",
    "DerivedConstants",
    "DomainError",
    "DrawdownTrackingError",
    "DualSolution",
    "FreeBoundary",
    "ModelParams",
    "NoDrawdownSolution",
    "NumericalBlowup",
    "OutOfRegion",
    "PolicyPoint",
    "PrimalPolicy",
    "Region",
    "SimConfig",
    "SimPath",
    "Simulator",
    "SingularSigma",
    "SingularSystem",
    "dual_path_check",
    "reconstruct",
    "utility",
    "validate",
]
