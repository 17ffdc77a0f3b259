"""The private posted-price estimator and its parameter formulas.

One run: every player sees the offer for its type and accepts or rejects;
the count ``m`` of accepting target-type players is released as
``s = (m + Lap(1/eps)) / c`` truncated to ``[0, n]``, and each accepting
player of type ``j`` is paid ``eps * (alpha_j + Lap(gamma/eps))``.
Payments are left unclamped, so they can be negative.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .agents import Population, Strategy, decide, draw_costs
from .contracts import Contract, realize_offers
from .distributions import Distribution, NoiseSpec, sample_laplace
from .streams import Streams, as_streams

TRUTHFUL = Strategy.truthful()


class InfeasibleError(ValueError):
    """Requested budget or accuracy cannot be met by any parameter choice."""


@dataclass(frozen=True)
class MechanismParams:
    epsilon: float
    c: float
    target_type: int = 1
    noise_off: bool = False  # test hook only

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.c <= 1.0:
            raise ValueError("c must lie in (0, 1]")


@dataclass
class MechanismOutcome:
    estimate_s_hat: float
    raw_s: float
    payments: np.ndarray
    accepted: np.ndarray
    m: int
    seed: int
    noise_estimate: float
    noise_payments: np.ndarray
    offers: np.ndarray

    def to_dict(self) -> dict:
        return {
            "estimate_s_hat": self.estimate_s_hat,
            "raw_s": self.raw_s,
            "m": self.m,
            "n_accepted": int(self.accepted.sum()),
            "seed": self.seed,
            "noise_estimate": self.noise_estimate,
            "payments": self.payments.tolist(),
            "accepted": self.accepted.tolist(),
            "noise_payments": self.noise_payments.tolist(),
            "offers": [None if math.isnan(x) else x for x in self.offers.tolist()],
        }


@dataclass
class BatchResult:
    """Per-replication summaries of repeated runs on one database.

    ``tracked`` maps a player index to its per-replication ``cost``,
    ``offer``, ``accepted`` and ``payment`` columns.
    """

    raw_s: np.ndarray
    s_hat: np.ndarray
    m: np.ndarray
    n_accepted: np.ndarray
    total_payment: np.ndarray
    accepted_by_type: np.ndarray  # (R, h) counts
    tracked: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def replications(self) -> int:
        return len(self.raw_s)


def _check_compatible(contract: Contract, params: MechanismParams, h: int) -> None:
    if contract.h != h:
        raise ValueError(f"contract covers {contract.h} types but the population has {h}")
    if abs(contract.c - params.c) > 1e-12 or abs(contract.epsilon - params.epsilon) > 1e-12:
        raise ValueError("contract was built for a different (c, epsilon)")
    if not 1 <= params.target_type <= h:
        raise ValueError("target_type out of range")


def _run_rows(
    types: np.ndarray,
    costs: np.ndarray,
    contract: Contract,
    params: MechanismParams,
    offer_rng: np.random.Generator,
    est_rng: np.random.Generator,
    pay_rng: np.random.Generator,
    strategies: Mapping[int, Strategy] | None = None,
) -> dict[str, np.ndarray]:
    """Vectorized mechanism over ``R`` independent rows of ``n`` players."""
    R, n = costs.shape
    types = np.broadcast_to(types, (R, n))
    eps = params.epsilon
    offers = realize_offers(contract, types, offer_rng)
    accepted = decide(TRUTHFUL, offers, costs)
    for i, strat in (strategies or {}).items():
        accepted[:, i] = decide(strat, offers[:, i], costs[:, i])

    m = np.count_nonzero(accepted & (types == params.target_type), axis=1)
    noise_est = sample_laplace(NoiseSpec(1.0 / eps), est_rng, R, noise_off=params.noise_off)
    raw_s = (m + noise_est) / params.c
    s_hat = np.clip(raw_s, 0.0, float(n))

    if contract.gamma > 0:
        noise_pay = sample_laplace(NoiseSpec(contract.gamma / eps), pay_rng, (R, n), noise_off=params.noise_off)
    else:
        noise_pay = np.zeros((R, n))
    with np.errstate(invalid="ignore"):
        payments = np.where(accepted, eps * (offers + noise_pay), 0.0)
    return {
        "offers": offers,
        "accepted": accepted,
        "m": m,
        "noise_estimate": np.asarray(noise_est, dtype=float),
        "raw_s": raw_s,
        "s_hat": s_hat,
        "noise_payments": noise_pay,
        "payments": payments,
    }


def run_mechanism(
    population: Population, contract: Contract, params: MechanismParams, seed: int
) -> MechanismOutcome:
    """One run on a fixed population; a pure function of its arguments."""
    _check_compatible(contract, params, population.h)
    streams = Streams(seed)
    out = _run_rows(
        np.asarray(population.database)[None, :],
        np.asarray(population.costs, dtype=float)[None, :],
        contract,
        params,
        streams.get("offers"),
        streams.get("noise/estimate"),
        streams.get("noise/payments"),
    )
    return MechanismOutcome(
        estimate_s_hat=float(out["s_hat"][0]),
        raw_s=float(out["raw_s"][0]),
        payments=out["payments"][0],
        accepted=out["accepted"][0],
        m=int(out["m"][0]),
        seed=seed,
        noise_estimate=float(out["noise_estimate"][0]),
        noise_payments=out["noise_payments"][0],
        offers=out["offers"][0],
    )


def simulate_batch(
    database: Sequence[int],
    dists: Sequence[Distribution],
    contract: Contract,
    params: MechanismParams,
    replications: int,
    seed,
    *,
    fixed_costs: Mapping[int, float] | None = None,
    strategies: Mapping[int, Strategy] | None = None,
    track: Sequence[int] | str = (),
) -> BatchResult:
    """Repeat the mechanism, redrawing every cost from its type's law each time.

    The cost, offer and noise streams are consumed identically whatever the
    strategies, so two calls with the same seed that differ only in
    ``strategies`` are coupled replication by replication.
    """
    database = np.asarray(database, dtype=int)
    h = len(dists)
    if database.min() < 1 or database.max() > h:
        raise ValueError("database entries must lie in 1..h")
    _check_compatible(contract, params, h)
    n = len(database)
    streams = as_streams(seed)
    pop_rng, offer_rng = streams.get("population"), streams.get("offers")
    est_rng, pay_rng = streams.get("noise/estimate"), streams.get("noise/payments")
    track = list(range(n)) if track == "all" else list(track)

    chunk = max(1, min(replications, 2**20 // n))
    parts: list[dict] = []
    done = 0
    while done < replications:
        size = min(chunk, replications - done)
        costs = draw_costs(database, dists, pop_rng, size)
        for i, v in (fixed_costs or {}).items():
            costs[:, i] = v
        out = _run_rows(database, costs, contract, params, offer_rng, est_rng, pay_rng, strategies)
        acc = out["accepted"]
        part = {
            "raw_s": out["raw_s"],
            "s_hat": out["s_hat"],
            "m": out["m"],
            "n_accepted": acc.sum(axis=1),
            "total_payment": out["payments"].sum(axis=1),
            "accepted_by_type": np.stack([acc[:, database == j].sum(axis=1) for j in range(1, h + 1)], axis=1),
        }
        for i in track:
            part[("cost", i)] = costs[:, i]
            part[("offer", i)] = out["offers"][:, i]
            part[("accepted", i)] = acc[:, i]
            part[("payment", i)] = out["payments"][:, i]
        parts.append(part)
        done += size

    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    tracked = {i: {name: cat[(name, i)] for name in ("cost", "offer", "accepted", "payment")} for i in track}
    return BatchResult(
        raw_s=cat["raw_s"],
        s_hat=cat["s_hat"],
        m=cat["m"],
        n_accepted=cat["n_accepted"],
        total_payment=cat["total_payment"],
        accepted_by_type=cat["accepted_by_type"],
        tracked=tracked,
    )


def accuracy_bound(n1: int, c: float, epsilon: float) -> float:
    """Error level exceeded with probability at most 1/3 (Chebyshev with k = sqrt 3)."""
    if not 0.0 < c <= 1.0 or not epsilon > 0:
        raise ValueError("need c in (0, 1] and epsilon > 0")
    return math.sqrt(3.0 * (n1 * (1.0 - c) / c + 2.0 / (epsilon**2 * c**2)))


def estimate_std(n1: int, c: float, epsilon: float) -> float:
    """Standard deviation of the untruncated estimate."""
    return math.sqrt((n1 * c * (1.0 - c) + 2.0 / epsilon**2) / c**2)


def params_for_accuracy(k: float, n: int) -> tuple[float, float]:
    """(c, epsilon) making the estimator k-accurate for any n1 <= n."""
    if not k > 0 or n < 1:
        raise ValueError("need k > 0 and n >= 1")
    x = k * k / (6.0 * n)
    c = 1.0 / (1.0 + x)
    eps = 2.0 * math.sqrt(3.0) * (1.0 + x) / k
    # the bound equals k exactly in real arithmetic; rounding c can push the
    # float bound a few parts in 1e12 above it, so raise eps just enough
    for _ in range(8):
        excess = accuracy_bound(n, c, eps) / k - 1.0
        if excess <= 0:
            break
        eps *= 1.0 + 2.0 * excess + 4 * sys.float_info.epsilon
    return c, eps


def c_for_epsilon(epsilon: float, n: int) -> float:
    """Sampling rate balancing the sampling and noise terms of the error."""
    disc = 1.0 - 8.0 / (epsilon**2 * n)
    if -1e-12 < disc < 0:  # round-off at the feasibility edge
        disc = 0.0
    if disc < 0:
        raise InfeasibleError(f"epsilon={epsilon} is below sqrt(8/n)={math.sqrt(8.0 / n)}")
    return (1.0 + math.sqrt(disc)) / 2.0


def expected_total_payment(epsilon: float, n: int, alpha_max: float) -> float:
    return epsilon * alpha_max * c_for_epsilon(epsilon, n) * n


def params_for_budget(budget: float, n: int, alpha_max: float) -> tuple[float, float]:
    """Solve ``eps * alpha * c(eps) * n = budget`` for (c, epsilon).

    The left side increases with epsilon from ``alpha * sqrt(2n)`` at
    ``epsilon = sqrt(8/n)``, so budgets at or below that are infeasible.
    """
    if not budget > 0 or not alpha_max > 0 or n < 1:
        raise ValueError("need budget > 0, alpha_max > 0 and n >= 1")
    eps_min = math.sqrt(8.0 / n)
    floor = alpha_max * math.sqrt(2.0 * n)
    if budget <= floor:
        raise InfeasibleError(f"budget {budget} does not exceed the minimum {floor} (alpha*sqrt(2n))")
    eps_hi = eps_min + 2.0 * budget / (alpha_max * n)
    eps = brentq(lambda e: expected_total_payment(e, n, alpha_max) - budget, eps_min, eps_hi, xtol=1e-15, rtol=1e-15)
    return c_for_epsilon(eps, n), eps


def flatten_multiattr(record: Sequence[int], h: int) -> int:
    """Encode a d-attribute record over ``[h]`` as a single type in ``[h**d]``."""
    if h < 1:
        raise ValueError("h must be positive")
    out = 1
    for pos, attr in enumerate(record):
        if not 1 <= attr <= h:
            raise ValueError(f"attribute {attr} outside 1..{h}")
        out += (attr - 1) * h**pos
    return out
