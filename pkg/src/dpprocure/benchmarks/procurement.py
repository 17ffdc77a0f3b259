"""Optimal w-unit procurement and the benchmarks it is compared against."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..distributions import Bracket, Distribution, quantile, sample_cost
from .ironing import IronedCurve

Z_SCORE = 3.0


@dataclass
class ProcurementResult:
    win_probability: np.ndarray
    expected_payments: np.ndarray | None = None
    winners: np.ndarray | None = None  # one realized draw, when an rng was given

    @property
    def total_expected_payment(self) -> float:
        if self.expected_payments is None:
            raise ValueError("payments were not computed")
        return float(self.expected_payments.sum())


def _check_w(n: int, w: int) -> None:
    if not 1 <= w < n:
        raise ValueError(f"need 1 <= w < n, got w={w}, n={n}")


def _win_probability(key: float, others: np.ndarray, w: int) -> float:
    below = int(np.count_nonzero(others < key))
    tied = int(np.count_nonzero(others == key))
    if below >= w:
        return 0.0
    if below + tied + 1 <= w:
        return 1.0
    return (w - below) / (tied + 1)


def myerson_procure(costs: Sequence[float], w: int, curve: IronedCurve, rng: np.random.Generator | None = None) -> ProcurementResult:
    """Buy from the ``w`` smallest ironed virtual costs, ties split uniformly."""
    costs = np.asarray(costs, dtype=float)
    _check_w(len(costs), w)
    keys = curve.rank_key(costs)
    probs = np.array([_win_probability(keys[i], np.delete(keys, i), w) for i in range(len(costs))])
    winners = None
    if rng is not None:
        sure = np.flatnonzero(probs == 1.0)
        shared = np.flatnonzero((probs > 0) & (probs < 1))
        picked = rng.choice(shared, size=w - len(sure), replace=False) if len(shared) else np.array([], int)
        winners = np.sort(np.concatenate([sure, picked]).astype(int))
    return ProcurementResult(probs, winners=winners)


def _payment_upper_limit(others: np.ndarray, curve: IronedCurve) -> float:
    # past this point every other player ranks strictly ahead of player i
    top = 0.0
    for v in others:
        iv = curve.interval_of(float(v))
        top = max(top, iv[1] if iv else float(v))
    return top


def myerson_expected_payment(costs: Sequence[float], w: int, curve: IronedCurve) -> ProcurementResult:
    """Exact ``v x(v) + integral_v^inf x(t) dt`` for every player.

    The win probability as a function of the player's own cost is a step
    function whose jumps sit at the other players' costs and at ironed
    interval ends, so the integral is a finite sum over those steps.
    """
    costs = np.asarray(costs, dtype=float)
    _check_w(len(costs), w)
    result = myerson_procure(costs, w, curve)
    keys = curve.rank_key(costs)
    ends = [e for ab in curve.ironed_costs for e in ab]
    payments = np.zeros(len(costs))
    for i, v in enumerate(costs):
        x_v = result.win_probability[i]
        if x_v == 0.0:
            continue
        others_cost = np.delete(costs, i)
        others_key = np.delete(keys, i)
        top = _payment_upper_limit(others_cost, curve)
        cuts = np.unique(np.clip(np.concatenate([[v, top], others_cost, ends]), v, top))
        total = v * x_v
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            t = 0.5 * (lo + hi)
            total += (hi - lo) * _win_probability(float(curve.rank_key(t)), others_key, w)
        payments[i] = total
    result.expected_payments = payments
    return result


def myerson_total_payment_batch(costs: np.ndarray, w: int, curve: IronedCurve) -> np.ndarray:
    """Vectorized total expected payment for each row of ``costs``.

    Uses the closed forms for the three boundary configurations: no ironing
    at the (w+1)-th cost (each winner pays it), the (w+1)-th cost alone in an
    ironed interval ``[a, b)`` holding ``e`` losers (each winner pays
    ``a + (b - a)/(e + 1)``), and a tie across the w-th place inside
    ``[a, b)`` (sure winners pay ``a + (b - a)(w - l1 + 1)/(l2 + 1)``, each
    tied player pays ``b (w - l1)/l2``).
    """
    costs = np.sort(np.atleast_2d(np.asarray(costs, dtype=float)), axis=1)
    R, n = costs.shape
    _check_w(n, w)
    v_next = costs[:, w]
    total = w * v_next
    for a, b in curve.ironed_costs:
        inside = (costs >= a) & (costs < b)
        l1 = np.count_nonzero(costs < a, axis=1)
        l2 = np.count_nonzero(inside, axis=1)
        hit = (v_next >= a) & (v_next < b)
        tie = hit & (l1 < w)  # the w-th cost shares the interval
        alone = hit & (l1 == w)
        total = np.where(alone, w * (a + (b - a) / (l2 + 1)), total)
        with np.errstate(divide="ignore", invalid="ignore"):
            tie_total = l1 * (a + (b - a) * (w - l1 + 1) / (l2 + 1)) + (w - l1) * b
        total = np.where(tie, tie_total, total)
    return total


@dataclass
class Estimate:
    mean: float
    ci_halfwidth: float
    replications: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci_halfwidth": self.ci_halfwidth, "replications": self.replications}


def _estimate(samples: np.ndarray) -> Estimate:
    R = len(samples)
    sd = float(samples.std(ddof=1)) if R > 1 else 0.0
    return Estimate(float(samples.mean()), Z_SCORE * sd / math.sqrt(R), R)


def envy_free_benchmark(dist: Distribution, n: int, w: int, replications: int, rng: np.random.Generator) -> Estimate:
    """Monte-Carlo ``w * E[v_(w+1)]`` over ``n`` i.i.d. costs."""
    _check_w(n, w)
    out = np.empty(replications)
    chunk = max(1, 2**20 // n)
    for s in range(0, replications, chunk):
        size = min(chunk, replications - s)
        draws = sample_cost(dist, rng, (size, n))
        out[s : s + size] = w * np.partition(draws, w, axis=1)[:, w]
    return _estimate(out)


def order_stat_mean_uniform(k: int, n: int, lo: float = 0.0, hi: float = 1.0) -> float:
    """E of the k-th smallest of n uniform draws."""
    return lo + (hi - lo) * k / (n + 1)


def order_stat_mean_exponential(k: int, n: int, rate: float = 1.0) -> float:
    """E of the k-th smallest of n exponential draws (Renyi representation)."""
    return sum(1.0 / (n - i) for i in range(k)) / rate


def bracket_payment(w: int, n: int, alpha_lo: float, alpha_hi: float, c_lo: float, beta: float) -> float:
    """Expected total price paid under a randomized two-point offer at ``c = w/n``."""
    lo = 0.0 if alpha_lo is None else alpha_lo
    return w * (alpha_hi - (n * c_lo / w) * (1.0 - beta) * (alpha_hi - lo))


def mechanism_expected_payment(dist: Distribution, n: int, w: int) -> float:
    """Expected total posted price (before the epsilon scaling) when ``c = w/n``."""
    _check_w(n, w)
    loc = quantile(dist, w / n)
    if isinstance(loc, Bracket):
        beta = (w / n - loc.cdf_lo) / (loc.cdf_hi - loc.cdf_lo)
        return bracket_payment(w, n, loc.lo, loc.hi, loc.cdf_lo, beta)
    return w * float(loc)


def myerson_benchmark(dist: Distribution, n: int, w: int, curve: IronedCurve, replications: int, rng) -> Estimate:
    _check_w(n, w)
    out = np.empty(replications)
    chunk = max(1, 2**20 // n)
    for s in range(0, replications, chunk):
        size = min(chunk, replications - s)
        out[s : s + size] = myerson_total_payment_batch(sample_cost(dist, rng, (size, n)), w, curve)
    return _estimate(out)


def approx_ratio_experiment(
    dist: Distribution,
    n: int,
    w: int,
    replications: int,
    rng: np.random.Generator,
    *,
    benchmark: str = "envy_free",
    curve: IronedCurve | None = None,
) -> dict:
    """Mechanism payment over a benchmark, checked against 2 or 2r.

    ``pass`` is None when the 2r bound does not apply (an ironed interval
    starting at zero cost).
    """
    from .ironing import build_ironed_curve

    _check_w(n, w)
    mech = mechanism_expected_payment(dist, n, w)
    r = 1.0
    if benchmark == "envy_free":
        est = envy_free_benchmark(dist, n, w, replications, rng)
        bound = 2.0
    elif benchmark == "myerson":
        curve = curve or build_ironed_curve(dist)
        est = myerson_benchmark(dist, n, w, curve, replications, rng)
        r = curve.ratio_r
        bound = 2.0 * r
    else:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    ratio = mech / est.mean if est.mean > 0 else math.inf
    # benchmark CI pushed through the ratio
    slack = est.ci_halfwidth / est.mean if est.mean > 0 else math.inf
    applicable = math.isfinite(bound)
    return {
        "benchmark": benchmark,
        "n": n,
        "w": w,
        "mech_payment": mech,
        "benchmark_payment": est.mean,
        "benchmark_ci": est.ci_halfwidth,
        "ratio": ratio,
        "bound": bound,
        "r": r,
        "bound_applicable": applicable,
        "pass": (ratio <= bound * (1.0 + slack)) if applicable else None,
        "replications": replications,
    }


def binomial_median(n: int, p: float) -> int:
    """Smallest m with P[Bin(n, p) <= m] >= 1/2, computed in exact arithmetic.

    ``p`` is read through its shortest decimal repr, so 0.1 means 1/10.
    Terms are kept as integers scaled by ``den**n``.
    """
    if n < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 0 and p in [0, 1]")
    frac = Fraction(repr(float(p)))
    if frac == 0:
        return 0
    if frac == 1:
        return n
    num, den = frac.numerator, frac.denominator
    rest = den - num
    half = den**n  # compare 2 * cdf against the full mass
    term = rest**n
    cdf, m = term, 0
    while 2 * cdf < half:
        term = term * (n - m) * num // ((m + 1) * rest)
        m += 1
        cdf += term
    return m


def binomial_median_check(n: int, p: float) -> bool:
    if n > 10**4:
        raise ValueError("exact check limited to n <= 10^4")
    m = binomial_median(n, p)
    return math.floor(n * p) <= m <= math.ceil(n * p)


def virtual_cost_payment_identity_check(dist, n: int, w: int, replications: int, rng, curve: IronedCurve | None = None) -> dict:
    """Compare E[total payment] with E[sum of virtual cost times allocation].

    Meant for laws whose virtual cost is increasing, where ironing is a no-op.
    """
    from .ironing import build_ironed_curve, virtual_cost

    if w == 0:
        return {"lhs": 0.0, "rhs": 0.0, "ci": 0.0, "lhs_ci": 0.0, "rhs_ci": 0.0, "pass": True}
    _check_w(n, w)
    curve = curve or build_ironed_curve(dist)
    lhs, rhs = np.empty(replications), np.empty(replications)
    chunk = max(1, 2**20 // n)
    for s in range(0, replications, chunk):
        size = min(chunk, replications - s)
        draws = sample_cost(dist, rng, (size, n))
        lhs[s : s + size] = myerson_total_payment_batch(draws, w, curve)
        phi = np.sort(virtual_cost(dist, draws), axis=1)
        rhs[s : s + size] = phi[:, :w].sum(axis=1)
    left, right = _estimate(lhs), _estimate(rhs)
    ci = math.hypot(left.ci_halfwidth, right.ci_halfwidth)
    return {
        "lhs": left.mean,
        "rhs": right.mean,
        "ci": ci,
        "lhs_ci": left.ci_halfwidth,
        "rhs_ci": right.ci_halfwidth,
        "pass": abs(left.mean - right.mean) <= ci,
    }
