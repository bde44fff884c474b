"""Heat flow through a three-layer medium with two interfaces.

Closed-form kernels, a small-time expansion, exact-in-law Monte Carlo and a
finite-volume reference solver for ``rho u_t = 1/2 (rho A u_x)_x``.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DerivativeOrderError,
    InterfacePointError,
    MatchingConditionError,
    MlheatError,
    OrderCapError,
    ParameterError,
)
from .medium import PhysicalMedium, SdeParams, from_sde_params, to_sde_params
from .expansion import PiecewiseInitialData, compatible_initial_data, expand_u
from .montecarlo import SamplerConfig, estimate_expectation, simulate_path
from .pde import oracle_values, solve

__all__ = [
    "__version__",
    "ConvergenceError",
    "DerivativeOrderError",
    "InterfacePointError",
    "MatchingConditionError",
    "MlheatError",
    "OrderCapError",
    "ParameterError",
    "PhysicalMedium",
    "SdeParams",
    "from_sde_params",
    "to_sde_params",
    "PiecewiseInitialData",
    "compatible_initial_data",
    "expand_u",
    "SamplerConfig",
    "estimate_expectation",
    "simulate_path",
    "oracle_values",
    "solve",
]
