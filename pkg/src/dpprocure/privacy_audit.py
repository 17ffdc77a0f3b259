"""Empirical epsilon-mutual-boundedness audits.

Both sides of an adjacent pair are simulated independently, the tested
statistic is histogrammed on a shared binning, and the largest absolute log
ratio over well-populated bins is compared with ``epsilon + ln(slack)``.
Point masses (clamped estimates, zero payments) get bins of their own, and
the extreme tails beyond the central pooled range are set aside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .contracts import build_contract
from .distributions import Distribution
from .mechanism import MechanismParams, simulate_batch
from .streams import as_streams


@dataclass(frozen=True)
class AdjacentPair:
    database_a: tuple[int, ...]
    database_b: tuple[int, ...]
    flipped_index: int

    def __post_init__(self):
        a, b = np.asarray(self.database_a), np.asarray(self.database_b)
        if a.shape != b.shape:
            raise ValueError("adjacent databases must have the same length")
        diff = np.flatnonzero(a != b)
        if len(diff) > 1:
            raise ValueError("adjacent databases differ in more than one entry")
        if len(diff) == 1 and diff[0] != self.flipped_index:
            raise ValueError("flipped_index does not match the differing entry")
        if not 0 <= self.flipped_index < len(a):
            raise ValueError("flipped_index out of range")

    @classmethod
    def flip(cls, database: Sequence[int], index: int, new_type: int) -> "AdjacentPair":
        b = list(database)
        b[index] = new_type
        return cls(tuple(database), tuple(b), index)


@dataclass
class RatioTestReport:
    epsilon_target: float
    slack: float
    bins: int
    qualifying_bins: int
    min_bin_count: int
    max_log_ratio: float
    direction: str  # "a>b" or "b>a": which side is heavier on the worst bin
    status: str  # "pass" | "fail" | "inconclusive"
    coverage: float  # pooled mass inside qualifying bins
    overflow_a: tuple[int, int] = (0, 0)
    overflow_b: tuple[int, int] = (0, 0)
    atoms: dict[float, tuple[float, float]] = field(default_factory=dict)  # value -> (mass a, mass b)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def threshold(self) -> float:
        return self.epsilon_target + math.log(self.slack)

    def to_dict(self) -> dict:
        return {
            "epsilon_target": self.epsilon_target,
            "slack": self.slack,
            "bins": self.bins,
            "qualifying_bins": self.qualifying_bins,
            "min_bin_count": self.min_bin_count,
            "max_log_ratio": self.max_log_ratio,
            "direction": self.direction,
            "status": self.status,
            "pass": self.passed,
            "coverage": self.coverage,
            "overflow_a": list(self.overflow_a),
            "overflow_b": list(self.overflow_b),
            "atoms": {repr(k): list(v) for k, v in self.atoms.items()},
        }


def ratio_test(
    a: np.ndarray,
    b: np.ndarray,
    epsilon: float,
    bins: int = 20,
    slack: float = 1.1,
    *,
    min_count: int = 500,
    atoms: Sequence[float] = (),
    tail_mass: float = 1e-3,
    min_bins: int = 5,
) -> RatioTestReport:
    """Two-sided histogram test of ``Pr[A in I] <= e^eps Pr[B in I]`` and back.

    Any value carrying at least ``min_count`` pooled samples is treated as an
    atom alongside the explicit ``atoms``. The rest is cut into ``bins``
    equal-mass pooled bins over the central ``1 - tail_mass`` range; the two
    overflow bins are reported but not tested. The verdict is inconclusive
    when fewer than ``min_bins`` bins qualify, unless the qualifying bins
    already hold essentially all of the mass (a degenerate statistic).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise ValueError("need samples on both sides")

    pooled = np.concatenate([a, b])
    vals, counts = np.unique(pooled, return_counts=True)
    atom_set = sorted(set(float(x) for x in atoms) | set(vals[counts >= min_count].tolist()))
    ca_list, cb_list = [], []
    atom_mass = {}
    in_atom_a = np.isin(a, atom_set)
    in_atom_b = np.isin(b, atom_set)
    for x in atom_set:
        ka, kb = int(np.count_nonzero(a == x)), int(np.count_nonzero(b == x))
        ca_list.append(ka)
        cb_list.append(kb)
        atom_mass[x] = (ka / na, kb / nb)

    ra, rb = a[~in_atom_a], b[~in_atom_b]
    over_a = over_b = (0, 0)
    if len(ra) + len(rb) > 0:
        rest = np.concatenate([ra, rb])
        edges = np.unique(np.quantile(rest, np.linspace(tail_mass / 2, 1 - tail_mass / 2, bins + 1)))
        if len(edges) >= 2:
            ha, _ = np.histogram(ra, edges)
            hb, _ = np.histogram(rb, edges)
            ca_list += ha.tolist()
            cb_list += hb.tolist()
        lo, hi = edges[0], edges[-1]
        over_a = (int(np.count_nonzero(ra < lo)), int(np.count_nonzero(ra > hi)))
        over_b = (int(np.count_nonzero(rb < lo)), int(np.count_nonzero(rb > hi)))

    ca, cb = np.array(ca_list, dtype=float), np.array(cb_list, dtype=float)
    ok = (ca >= min_count) & (cb >= min_count)
    coverage = float((ca[ok].sum() + cb[ok].sum()) / (na + nb))
    if ok.any():
        logs = np.log((ca[ok] / na) / (cb[ok] / nb))
        worst = int(np.argmax(np.abs(logs)))
        max_log = float(abs(logs[worst]))
        direction = "a>b" if logs[worst] >= 0 else "b>a"
    else:
        max_log, direction = math.nan, "a>b"

    q = int(ok.sum())
    if q < min_bins and coverage < 1.0 - tail_mass:
        status = "inconclusive"
    else:
        status = "pass" if max_log <= epsilon + math.log(slack) else "fail"
    return RatioTestReport(
        epsilon_target=epsilon,
        slack=slack,
        bins=len(ca),
        qualifying_bins=q,
        min_bin_count=int(min(ca[ok].min(), cb[ok].min())) if q else 0,
        max_log_ratio=max_log,
        direction=direction,
        status=status,
        coverage=coverage,
        overflow_a=over_a,
        overflow_b=over_b,
        atoms=atom_mass,
    )


def _side_batches(pair: AdjacentPair, dists, params: MechanismParams, samples: int, rng, track=()):
    contract = build_contract(dists, params.c, params.epsilon)
    streams = as_streams(rng)
    out = []
    for side, db in (("side/a", pair.database_a), ("side/b", pair.database_b)):
        out.append(simulate_batch(db, dists, contract, params, samples, streams.child(side), track=track))
    return out


def audit_estimate_dp(
    pair: AdjacentPair,
    dists: Sequence[Distribution],
    params: MechanismParams,
    samples: int = 200_000,
    bins: int = 20,
    slack: float = 1.1,
    rng=0,
    *,
    epsilon_target: float | None = None,
    min_count: int = 500,
) -> RatioTestReport:
    """Ratio test on the released (truncated) estimate.

    ``epsilon_target`` defaults to the mechanism's epsilon; lowering it is how
    the auditor's power is checked.
    """
    side_a, side_b = _side_batches(pair, dists, params, samples, rng)
    eps = params.epsilon if epsilon_target is None else epsilon_target
    return ratio_test(side_a.s_hat, side_b.s_hat, eps, bins, slack, min_count=min_count)


def audit_payment_dp(
    pair: AdjacentPair,
    dists: Sequence[Distribution],
    params: MechanismParams,
    player_index: int | None = None,
    samples: int = 200_000,
    bins: int = 20,
    slack: float = 1.1,
    rng=0,
    *,
    epsilon_target: float | None = None,
    min_count: int = 500,
) -> RatioTestReport:
    """Ratio test on one player's payment, with zero payment as its own bin."""
    i = pair.flipped_index if player_index is None else player_index
    side_a, side_b = _side_batches(pair, dists, params, samples, rng, track=[i])
    eps = params.epsilon if epsilon_target is None else epsilon_target
    return ratio_test(
        side_a.tracked[i]["payment"],
        side_b.tracked[i]["payment"],
        eps,
        bins,
        slack,
        min_count=min_count,
        atoms=(0.0,),
    )


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def laplace_pair(loc_a: float, loc_b: float, scale_b: float) -> tuple[Sampler, Sampler]:
    """Samplers for ``loc + Lap(scale_b)``; mutually bounded at ``|loc_a - loc_b| / scale_b``."""
    return (
        lambda rng, size: loc_a + rng.laplace(0.0, scale_b, size),
        lambda rng, size: loc_b + rng.laplace(0.0, scale_b, size),
    )


def laplace_log_ratio_bound(loc_a: float, loc_b: float, scale_b: float, grid=None) -> float:
    """Largest |log density ratio| of two Laplace laws, evaluated on a grid."""
    if grid is None:
        span = abs(loc_a - loc_b) + 20 * scale_b
        grid = np.linspace(min(loc_a, loc_b) - span, max(loc_a, loc_b) + span, 20001)
    grid = np.asarray(grid, dtype=float)
    # log-density difference, computed directly to avoid underflow
    diff = (np.abs(grid - loc_b) - np.abs(grid - loc_a)) / scale_b
    return float(np.max(np.abs(diff)))


def postprocessing_check(
    f: Callable[[np.ndarray], np.ndarray],
    sampler_a: Sampler,
    sampler_b: Sampler,
    epsilon: float,
    samples: int = 200_000,
    bins: int = 20,
    slack: float = 1.1,
    rng=0,
    *,
    min_count: int = 500,
) -> RatioTestReport:
    """Apply ``f`` to draws from a certified pair and re-run the ratio test."""
    streams = as_streams(rng)
    xa = np.asarray(f(sampler_a(streams.get("side/a"), samples)), dtype=float)
    xb = np.asarray(f(sampler_b(streams.get("side/b"), samples)), dtype=float)
    return ratio_test(xa, xb, epsilon, bins, slack, min_count=min_count)
