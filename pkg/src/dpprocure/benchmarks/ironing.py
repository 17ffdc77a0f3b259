"""Virtual costs and Myerson ironing for a single continuous cost law.

In quantile space let ``h(q) = phi(F^-1(q))`` and ``H`` its running integral.
The ironed virtual cost is the slope of the lower convex envelope ``G`` of
``H``, read back at ``F(z)``. Where ``G < H`` the envelope is a straight
segment, so every cost in the matching interval shares one ironed value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..distributions import ContinuousDist

GRID_SIZE = 4096
TAIL_Q = 1e-6  # quantile truncation for unbounded support
IRON_REL_TOL = 1e-7


def _check_support(dist: ContinuousDist, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < dist.support_lo) or np.any(z > dist.support_hi):
        raise ValueError(f"cost outside the support [{dist.support_lo}, {dist.support_hi}]")
    return z


def virtual_cost(dist: ContinuousDist, z):
    """``z + F(z)/f(z)``; raises outside the support or where the density vanishes."""
    z = _check_support(dist, z)
    dens = np.asarray(dist.pdf(z), dtype=float)
    if np.any(dens <= 0):
        raise ValueError("density is zero at the requested cost")
    out = z + np.asarray(dist.cdf(z), dtype=float) / dens
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IronedCurve:
    dist: ContinuousDist
    q_grid: np.ndarray
    H_values: np.ndarray
    G_values: np.ndarray
    g_values: np.ndarray  # slope of G on [q_k, q_{k+1}); last entry repeats
    ironed_q: tuple[tuple[float, float], ...]
    ironed_costs: tuple[tuple[float, float], ...]
    truncated_at: float | None = None  # top quantile when the support is unbounded

    @property
    def step(self) -> float:
        return float(self.q_grid[1] - self.q_grid[0])

    def ironed_value(self, z):
        """Right-continuous lookup of ``g(F(z))``."""
        q = np.asarray(self.dist.cdf(_check_support(self.dist, z)), dtype=float)
        idx = np.clip(np.floor((q - self.q_grid[0]) / self.step + 1e-9).astype(int), 0, len(self.g_values) - 1)
        out = self.g_values[idx]
        return float(out) if out.ndim == 0 else out

    def rank_key(self, costs):
        """Ordering key equivalent to the ironed virtual cost.

        Costs inside an ironed interval ``[a, b)`` collapse to ``a``; others
        keep their own value. Ranking by this key is ranking by the ironed
        virtual cost, but without grid round-off creating spurious ties.
        """
        costs = np.asarray(costs, dtype=float)
        key = costs.copy()
        for a, b in self.ironed_costs:
            key = np.where((costs >= a) & (costs < b), a, key)
        return key

    def interval_of(self, z: float) -> tuple[float, float] | None:
        for a, b in self.ironed_costs:
            if a <= z < b:
                return a, b
        return None

    @property
    def ratio_r(self) -> float:
        """Largest ``b/a`` over ironed intervals; 1 with no ironing, inf if some ``a == 0``."""
        r = 1.0
        for a, b in self.ironed_costs:
            r = max(r, math.inf if a <= 0 else b / a)
        return r


def _lower_hull(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Indices of the lower convex envelope vertices, left to right."""
    hull: list[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j if it lies on or above the chord from i to k
            if (y[j] - y[i]) * (x[k] - x[i]) >= (y[k] - y[i]) * (x[j] - x[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def build_ironed_curve(dist: ContinuousDist, grid_size: int = GRID_SIZE) -> IronedCurve:
    if not isinstance(dist, ContinuousDist):
        raise TypeError("ironing needs a continuous distribution")
    truncated = None
    q_top = 1.0
    if not math.isfinite(dist.support_hi):
        q_top = truncated = 1.0 - TAIL_Q
    q = np.linspace(0.0, q_top, grid_size + 1)
    z = np.asarray(dist.ppf(q), dtype=float)
    dens = np.asarray(dist.pdf(z), dtype=float)
    if np.any(dens <= 0):
        raise ValueError("density vanishes inside the support; ironing needs f > 0")
    h = z + q / dens

    dq = q[1] - q[0]
    H = np.concatenate([[0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * dq)])
    hull = np.array(_lower_hull(q, H))
    G = np.interp(q, q[hull], H[hull])
    seg_slopes = np.diff(H[hull]) / np.diff(q[hull])
    cell_seg = np.searchsorted(hull, np.arange(grid_size), side="right") - 1
    g = np.append(seg_slopes[cell_seg], seg_slopes[-1])

    gap = H - G
    tol = IRON_REL_TOL * max(float(np.max(np.abs(H))), 1e-300)
    ironed = gap > tol
    ironed_q, ironed_costs = [], []
    k = 0
    while k <= grid_size:
        if not ironed[k]:
            k += 1
            continue
        start = k
        while k <= grid_size and ironed[k]:
            k += 1
        # hull vertices bounding the run
        lo_q, hi_q = q[start - 1], q[min(k, grid_size)]
        ironed_q.append((float(lo_q), float(hi_q)))
        ironed_costs.append((float(dist.ppf(lo_q)), float(dist.ppf(hi_q))))
    return IronedCurve(
        dist=dist,
        q_grid=q,
        H_values=H,
        G_values=G,
        g_values=g,
        ironed_q=tuple(ironed_q),
        ironed_costs=tuple(ironed_costs),
        truncated_at=truncated,
    )


def ironed_virtual_cost(curve: IronedCurve, z):
    return curve.ironed_value(z)
