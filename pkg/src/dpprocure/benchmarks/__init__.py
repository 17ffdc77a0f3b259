"""Optimal-procurement machinery and approximation-ratio experiments."""

from .ironing import IronedCurve, build_ironed_curve, ironed_virtual_cost, virtual_cost
from .procurement import (
    Estimate,
    ProcurementResult,
    approx_ratio_experiment,
    binomial_median,
    binomial_median_check,
    bracket_payment,
    envy_free_benchmark,
    mechanism_expected_payment,
    myerson_benchmark,
    myerson_expected_payment,
    myerson_procure,
    myerson_total_payment_batch,
    order_stat_mean_exponential,
    order_stat_mean_uniform,
    virtual_cost_payment_identity_check,
)

__all__ = [
    "IronedCurve",
    "build_ironed_curve",
    "ironed_virtual_cost",
    "virtual_cost",
    "Estimate",
    "ProcurementResult",
    "approx_ratio_experiment",
    "binomial_median",
    "binomial_median_check",
    "bracket_payment",
    "envy_free_benchmark",
    "mechanism_expected_payment",
    "myerson_benchmark",
    "myerson_expected_payment",
    "myerson_procure",
    "myerson_total_payment_batch",
    "order_stat_mean_exponential",
    "order_stat_mean_uniform",
    "virtual_cost_payment_identity_check",
]
