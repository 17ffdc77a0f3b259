"""Players: populations, decision rules, and incentive audits.

A player sees only the realized offer for its type. Truthful play accepts
exactly when the offer covers the private cost; the deviations here shift
that threshold or ignore the offer altogether.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .contracts import Contract
from .distributions import Distribution, sample_cost
from .streams import as_streams

Z_SCORE = 3.0


@dataclass(frozen=True)
class Population:
    database: np.ndarray  # types in 1..h
    costs: np.ndarray
    h: int

    def __post_init__(self):
        if len(self.database) < 1 or len(self.database) != len(self.costs):
            raise ValueError("need n >= 1 players with one cost each")

    @property
    def n(self) -> int:
        return len(self.database)


@dataclass(frozen=True)
class Strategy:
    kind: str = "truthful"
    shift: float = 0.0

    KINDS = ("truthful", "threshold_shift", "always_accept", "always_reject")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind != "threshold_shift" and self.shift != 0.0:
            raise ValueError("only threshold_shift takes a shift")

    @classmethod
    def truthful(cls) -> "Strategy":
        return cls("truthful")

    @classmethod
    def threshold_shift(cls, shift: float) -> "Strategy":
        return cls("threshold_shift", float(shift))

    @classmethod
    def always_accept(cls) -> "Strategy":
        return cls("always_accept")

    @classmethod
    def always_reject(cls) -> "Strategy":
        return cls("always_reject")

    @property
    def name(self) -> str:
        if self.kind == "threshold_shift":
            return f"threshold_shift({self.shift:+.6g})"
        return self.kind


def _check_database(database, h: int) -> np.ndarray:
    database = np.asarray(database, dtype=int)
    if database.ndim != 1 or len(database) == 0:
        raise ValueError("database must be a non-empty list of types")
    if database.min() < 1 or database.max() > h:
        raise ValueError(f"database entries must lie in 1..{h}")
    return database


def draw_costs(database, dists: Sequence[Distribution], rng: np.random.Generator, size: int | None = None):
    """Independent costs, player ``i`` drawn from the law of its type.

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    database = _check_database(database, len(dists))
    rows = 1 if size is None else size
    costs = np.empty((rows, len(database)))
    for j, dist in enumerate(dists, start=1):
        cols = np.flatnonzero(database == j)
        if len(cols):
            costs[:, cols] = np.asarray(sample_cost(dist, rng, (rows, len(cols))), dtype=float)
    return costs[0] if size is None else costs


def draw_population(database, dists: Sequence[Distribution], rng) -> Population:
    database = _check_database(database, len(dists))
    rng = rng if isinstance(rng, np.random.Generator) else as_streams(rng).get("population")
    return Population(database, draw_costs(database, dists, rng), len(dists))


def decide(strategy: Strategy, offer, v):
    """Accept/reject against a realized offer; NaN (null offer) is never accepted.

    Works elementwise on arrays.
    """
    offer = np.asarray(offer, dtype=float)
    v = np.asarray(v, dtype=float)
    real = ~np.isnan(offer)
    if strategy.kind == "truthful":
        out = real & (v <= np.where(real, offer, -np.inf))
    elif strategy.kind == "threshold_shift":
        out = real & (v <= np.where(real, offer + strategy.shift, -np.inf))
    elif strategy.kind == "always_accept":
        out = real & np.ones(np.broadcast(offer, v).shape, dtype=bool)
    else:
        out = np.zeros(np.broadcast(offer, v).shape, dtype=bool)
    return bool(out) if out.ndim == 0 else out


def default_deviations(alpha: float) -> list[Strategy]:
    return [
        Strategy.threshold_shift(-0.5 * alpha),
        Strategy.threshold_shift(-0.1 * alpha),
        Strategy.threshold_shift(0.1 * alpha),
        Strategy.threshold_shift(0.5 * alpha),
        Strategy.always_accept(),
        Strategy.always_reject(),
    ]


def default_cost_grid(offer_lo: float, offer_hi: float) -> np.ndarray:
    """Five distinct audited costs spanning the offer range and both sides of it."""
    lo, hi = offer_lo, offer_hi
    if hi - lo > 1e-12 * max(abs(hi), 1.0):
        return np.array([0.5 * lo, lo, 0.5 * (lo + hi), hi, hi + 0.5 * max(hi, 1e-12)])
    if hi <= 0:
        return np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    # a single offer: two costs on each side of it
    return hi * np.array([0.5, 0.75, 1.0, 1.25, 1.5])


@dataclass
class BicRow:
    deviation: str
    v_i: float
    utility_gap: float
    ci_halfwidth: float
    replications: int
    truthful_utility: float
    deviation_utility: float

    def to_dict(self) -> dict:
        return asdict(self)


def _utility(cols: dict, epsilon: float) -> np.ndarray:
    return cols["payment"] - epsilon * cols["accepted"] * cols["cost"]


def audit_bic(
    contract: Contract,
    dists: Sequence[Distribution],
    database,
    player_index: int,
    deviations: Sequence[Strategy] | None = None,
    replications: int = 10_000,
    rng=0,
    *,
    cost_grid: Sequence[float] | None = None,
    target_type: int = 1,
) -> list[BicRow]:
    """Truthful minus deviation utility for one player at fixed own costs.

    Other players stay truthful and have their costs redrawn every
    replication. Each deviation reuses the truthful run's seed, so the gap
    is a paired difference and a truthful "deviation" gives exactly zero.
    """
    from .mechanism import MechanismParams, simulate_batch

    if replications < 1000:
        raise ValueError("audit_bic needs at least 1000 replications")
    database = _check_database(database, len(dists))
    if not 0 <= player_index < len(database):
        raise ValueError("player_index out of range")
    offer = contract.offers[int(database[player_index])]
    if deviations is None:
        deviations = default_deviations(offer.mean)
    grid = default_cost_grid(offer.lower, offer.upper) if cost_grid is None else np.asarray(cost_grid, float)
    params = MechanismParams(contract.epsilon, contract.c, target_type)
    streams = as_streams(rng)

    rows = []
    for k, v in enumerate(grid):
        sub = streams.child(f"cost/{k}")

        def utility_under(strategy: Strategy) -> np.ndarray:
            res = simulate_batch(
                database, dists, contract, params, replications, sub,
                fixed_costs={player_index: float(v)},
                strategies={player_index: strategy},
                track=[player_index],
            )
            return _utility(res.tracked[player_index], contract.epsilon)

        base = utility_under(Strategy.truthful())
        for dev in deviations:
            alt = utility_under(dev)
            diff = base - alt
            sd = float(diff.std(ddof=1))
            rows.append(
                BicRow(
                    deviation=dev.name,
                    v_i=float(v),
                    utility_gap=float(diff.mean()),
                    ci_halfwidth=Z_SCORE * sd / math.sqrt(replications),
                    replications=replications,
                    truthful_utility=float(base.mean()),
                    deviation_utility=float(alt.mean()),
                )
            )
    return rows


@dataclass
class EiirRow:
    type: int
    mean_utility: float  # over accepting players
    ci_halfwidth: float
    accepted_count: int
    mean_utility_all: float  # over all players of the type, rejections count as 0
    acceptance_rate: float
    acceptance_se: float

    def to_dict(self) -> dict:
        return asdict(self)


def audit_eiir(
    contract: Contract,
    dists: Sequence[Distribution],
    database,
    replications: int = 2000,
    rng=0,
    *,
    strategy: Strategy | None = None,
    target_type: int = 1,
) -> list[EiirRow]:
    """Per-type utility of accepting players, everyone playing ``strategy`` (truthful by default)."""
    from .mechanism import MechanismParams, simulate_batch

    if replications < 1000:
        raise ValueError("audit_eiir needs at least 1000 replications")
    database = _check_database(database, len(dists))
    params = MechanismParams(contract.epsilon, contract.c, target_type)
    strategies = None
    if strategy is not None and strategy.kind != "truthful":
        strategies = {i: strategy for i in range(len(database))}
    res = simulate_batch(database, dists, contract, params, replications, rng, strategies=strategies, track="all")

    rows = []
    for j in range(1, len(dists) + 1):
        members = np.flatnonzero(database == j)
        if len(members) == 0:
            continue
        util = np.concatenate([_utility(res.tracked[i], contract.epsilon) for i in members])
        acc = np.concatenate([res.tracked[i]["accepted"] for i in members])
        taken = util[acc]
        count = len(taken)
        mean = float(taken.mean()) if count else 0.0
        ci = Z_SCORE * float(taken.std(ddof=1)) / math.sqrt(count) if count > 1 else 0.0
        rate = float(acc.mean())
        rows.append(
            EiirRow(
                type=j,
                mean_utility=mean,
                ci_halfwidth=ci,
                accepted_count=count,
                mean_utility_all=float(util.mean()),
                acceptance_rate=rate,
                acceptance_se=math.sqrt(max(rate * (1 - rate), 0.0) / len(acc)),
            )
        )
    return rows
