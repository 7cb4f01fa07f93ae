"""Robust immunization of bond portfolios against yield-curve perturbations."""

from .basis import BasisSet, build_basis
from .curves import CashFlowSchedule, Perturbation, YieldCurve, present_value, standard_liability, zero_coupon_bonds
from .errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    FormatError,
    ImmunizeError,
    ParameterError,
    RowError,
    SolverError,
)
from .hedging import build_portfolio, dynamic_experiment, static_experiment
from .sensitivity import Portfolio, SensitivitySystem, build_system
from .solvers import (
    jacobi_decompose,
    ri_constraints,
    solve_hd,
    solve_krd,
    solve_ri_l2,
    solve_ri_linf,
    value_matching,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "build_basis", "CashFlowSchedule", "Perturbation", "YieldCurve", "present_value",
    "standard_liability", "zero_coupon_bonds", "ConfigurationError", "ContractError", "DomainError",
    "FormatError", "ImmunizeError", "ParameterError", "RowError", "SolverError", "build_portfolio",
    "dynamic_experiment", "static_experiment", "Portfolio", "SensitivitySystem", "build_system",
    "jacobi_decompose", "ri_constraints", "solve_hd", "solve_krd", "solve_ri_l2", "solve_ri_linf",
    "value_matching",
]
