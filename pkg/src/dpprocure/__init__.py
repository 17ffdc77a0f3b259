"""Differentially private posted-price data procurement."""

__version__ = "0.1.0"

from .agents import Population, Strategy, audit_bic, audit_eiir, decide, draw_population
from .contracts import Contract, Deterministic, Randomized, build_contract
from .distributions import (
    DiscreteDist,
    Exponential,
    NoiseSpec,
    OracleDist,
    PiecewiseDensity,
    Uniform,
    from_spec,
    quantile,
)
from .mechanism import (
    InfeasibleError,
    MechanismOutcome,
    MechanismParams,
    accuracy_bound,
    flatten_multiattr,
    params_for_accuracy,
    params_for_budget,
    run_mechanism,
    simulate_batch,
)
from .streams import Streams

__all__ = [
    "Population",
    "Strategy",
    "audit_bic",
    "audit_eiir",
    "decide",
    "draw_population",
    "Contract",
    "Deterministic",
    "Randomized",
    "build_contract",
    "DiscreteDist",
    "Exponential",
    "NoiseSpec",
    "OracleDist",
    "PiecewiseDensity",
    "Uniform",
    "from_spec",
    "quantile",
    "InfeasibleError",
    "MechanismOutcome",
    "MechanismParams",
    "accuracy_bound",
    "flatten_multiattr",
    "params_for_accuracy",
    "params_for_budget",
    "run_mechanism",
    "simulate_batch",
    "Streams",
]
