"""Type-indexed posted-price contracts.

Every type ``j`` is offered a price calibrated so that a truthful player of
that type accepts with probability exactly ``c``. When the CDF cannot hit
``c`` (atoms, or an oracle-only CDF) the price is randomized between the two
bracketing points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .distributions import Bracket, Distribution, OracleDist, quantile


@dataclass(frozen=True)
class Deterministic:
    alpha: float

    @property
    def lower(self) -> float:
        return self.alpha

    @property
    def upper(self) -> float:
        return self.alpha

    @property
    def mean(self) -> float:
        return self.alpha

    def to_dict(self) -> dict:
        return {"kind": "deterministic", "alpha": self.alpha}


@dataclass(frozen=True)
class Randomized:
    """Offer ``alpha_hi`` with probability ``beta``, else ``alpha_lo``.

    ``alpha_lo is None`` is the null offer: nobody can accept it, and it only
    arises when ``c_lo == 0``.
    """

    alpha_lo: float | None
    alpha_hi: float
    beta: float
    c_lo: float
    c_hi: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be a probability")
        if self.alpha_lo is None and self.c_lo != 0.0:
            raise ValueError("a null lower offer requires c_lo == 0")
        if self.alpha_lo is not None and self.alpha_lo > self.alpha_hi:
            raise ValueError("alpha_lo must not exceed alpha_hi")

    @property
    def lower(self) -> float:
        # the null branch never pays, so the smallest real price is alpha_hi
        return self.alpha_hi if self.alpha_lo is None else self.alpha_lo

    @property
    def upper(self) -> float:
        return self.alpha_hi

    @property
    def mean(self) -> float:
        """Expected price conditional on a real offer being made."""
        if self.alpha_lo is None:
            return self.alpha_hi
        return (1.0 - self.beta) * self.alpha_lo + self.beta * self.alpha_hi

    @property
    def acceptance(self) -> float:
        return self.c_lo + self.beta * (self.c_hi - self.c_lo)

    def to_dict(self) -> dict:
        return {
            "kind": "randomized",
            "alpha_lo": self.alpha_lo,
            "alpha_hi": self.alpha_hi,
            "beta": self.beta,
            "c_lo": self.c_lo,
            "c_hi": self.c_hi,
        }


PaymentOffer = Union[Deterministic, Randomized]


@dataclass(frozen=True)
class Contract:
    offers: Mapping[int, PaymentOffer]  # keyed by type 1..h
    c: float
    gamma: float
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise ValueError("c must lie in (0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if sorted(self.offers) != list(range(1, len(self.offers) + 1)):
            raise ValueError("offers must be keyed by types 1..h")
        span = offer_span(self.offers.values())
        if self.gamma < 0 or self.gamma < span - 1e-12:
            raise ValueError(f"gamma={self.gamma} is below the offer span {span}")

    @property
    def h(self) -> int:
        return len(self.offers)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-type (lo, hi, beta) arrays indexed by ``type - 1``; null offers are NaN."""
        lo, hi, beta = [], [], []
        for j in range(1, self.h + 1):
            o = self.offers[j]
            if isinstance(o, Deterministic):
                row = (o.alpha, o.alpha, 0.0)
            else:
                row = (math.nan if o.alpha_lo is None else o.alpha_lo, o.alpha_hi, o.beta)
            lo.append(row[0])
            hi.append(row[1])
            beta.append(row[2])
        return np.array(lo), np.array(hi), np.array(beta)

    def to_dict(self) -> dict:
        return {
            "offers": {str(j): o.to_dict() for j, o in sorted(self.offers.items())},
            "c": self.c,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
        }


def offer_span(offers) -> float:
    offers = list(offers)
    return max(o.upper for o in offers) - min(o.lower for o in offers)


def build_contract(
    dists: Sequence[Distribution], c: float, epsilon: float, delta: float | None = None
) -> Contract:
    """Calibrate one offer per type so each accepts with probability ``c``.

    ``delta`` overrides the bisection width of oracle distributions.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must lie in (0, 1], got {c!r}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if len(dists) == 0:
        raise ValueError("need at least one type distribution")
    offers: dict[int, PaymentOffer] = {}
    for j, dist in enumerate(dists, start=1):
        loc = quantile(dist, c, delta)
        if isinstance(loc, Bracket):
            if not loc.cdf_lo < c < loc.cdf_hi:
                raise ValueError(f"type {j}: acceptance level {c} is unreachable")
            beta = (c - loc.cdf_lo) / (loc.cdf_hi - loc.cdf_lo)
            offers[j] = Randomized(loc.lo, loc.hi, beta, loc.cdf_lo, loc.cdf_hi)
        else:
            offers[j] = Deterministic(float(loc))
        if isinstance(dist, OracleDist):
            assert isinstance(offers[j], Randomized)
    return Contract(offers, c, offer_span(offers.values()), epsilon)


def realize_offer(offer: PaymentOffer, rng: np.random.Generator) -> float | None:
    if isinstance(offer, Deterministic):
        return offer.alpha
    return offer.alpha_hi if rng.random() < offer.beta else offer.alpha_lo


def realize_offers(contract: Contract, types: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`realize_offer`; ``types`` holds values in 1..h, null offers become NaN.

    One uniform is consumed per entry whatever the offer kind, so the stream
    position never depends on the contract.
    """
    lo, hi, beta = contract.arrays()
    t = np.asarray(types) - 1
    u = rng.random(t.shape)
    return np.where(u < beta[t], hi[t], lo[t])
