"""Invariant states of SQ(d) load-balancing fluid limits, with a finite-N simulator."""

from .distributions import DistributionError, ServiceDistribution, parse_dist
from .invariant import (
    ChainDensity,
    ExpMixture,
    InvariantState,
    ParameterError,
    SolverError,
    solve,
    verify,
)
from .laplace import LaplaceCache, QuadratureError
from .perf import WaitConfig, decay_exponent, h_diagnostic, mean_virtual_wait

__version__ = "0.1.0"

__all__ = [
    "ChainDensity",
    "DistributionError",
    "ExpMixture",
    "InvariantState",
    "LaplaceCache",
    "ParameterError",
    "QuadratureError",
    "ServiceDistribution",
    "SolverError",
    "WaitConfig",
    "decay_exponent",
    "h_diagnostic",
    "mean_virtual_wait",
    "parse_dist",
    "solve",
    "verify",
]
