"""Cost distributions and Laplace noise.

Three families are supported:

* :class:`ContinuousDist` subclasses (uniform, exponential, piecewise-constant
  density) with a CDF, density, and usually a closed-form quantile;
* :class:`DiscreteDist`, a finite set of atoms;
* :class:`OracleDist`, which exposes only a black-box CDF to the mechanism.

All objects are immutable. ``cdf``/``pdf``/``ppf`` accept scalars or arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

CDF_TOL = 1e-9
MAX_BISECT = 200


class Bracket(NamedTuple):
    """Quantile that could not be hit exactly.

    ``lo`` is ``None`` when no point has CDF strictly below the target
    (the "null offer" case); ``cdf_lo`` is then 0.
    """

    lo: float | None
    hi: float
    cdf_lo: float
    cdf_hi: float

    @property
    def width(self) -> float:
        return math.inf if self.lo is None else self.hi - self.lo


class ContinuousDist:
    """Base class for continuous cost distributions on ``[support_lo, support_hi]``.

    Subclasses implement ``cdf`` and ``pdf``; ``ppf`` falls back to bisection
    on the CDF (tolerance ``CDF_TOL`` on the CDF value) when no closed form is
    available.
    """

    support_lo: float = 0.0
    support_hi: float = math.inf
    has_closed_quantile: bool = False

    def cdf(self, v):
        raise NotImplementedError

    def pdf(self, v):
        raise NotImplementedError

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        lo = np.full(q.shape, self.support_lo, dtype=float)
        hi = np.full(q.shape, self._finite_hi(q), dtype=float)
        for _ in range(MAX_BISECT):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(np.abs(self.cdf(0.5 * (lo + hi)) - q) <= CDF_TOL):
                break
        out = 0.5 * (lo + hi)
        return float(out) if out.ndim == 0 else out

    def _finite_hi(self, q) -> float:
        if math.isfinite(self.support_hi):
            return self.support_hi
        hi = max(1.0, self.support_lo + 1.0)
        target = float(np.max(q)) if np.size(q) else 0.5
        while self.cdf(hi) < target and hi < 1e300:
            hi *= 2.0
        return hi

    @property
    def satisfies_assumption1(self) -> bool:
        """Density bounded away from zero on a bounded support."""
        if not math.isfinite(self.support_hi):
            return False
        grid = np.linspace(self.support_lo, self.support_hi, 2001)
        return bool(np.all(self.pdf(grid) > 0))

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))


@dataclass(frozen=True)
class Uniform(ContinuousDist):
    lo: float = 0.0
    hi: float = 1.0
    has_closed_quantile = True

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform needs hi > lo")

    @property
    def support_lo(self):
        return self.lo

    @property
    def support_hi(self):
        return self.hi

    def cdf(self, v):
        return np.clip((np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where((v >= self.lo) & (v <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def ppf(self, q):
        return self.lo + np.asarray(q, dtype=float) * (self.hi - self.lo)


@dataclass(frozen=True)
class Exponential(ContinuousDist):
    rate: float = 1.0
    has_closed_quantile = True
    support_lo = 0.0
    support_hi = math.inf

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v > 0, -np.expm1(-self.rate * np.maximum(v, 0.0)), 0.0)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v >= 0, self.rate * np.exp(-self.rate * np.maximum(v, 0.0)), 0.0)

    def ppf(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate


@dataclass(frozen=True)
class PiecewiseDensity(ContinuousDist):
    """Density constant on each ``[breakpoints[k], breakpoints[k+1])``.

    The last piece is closed on the right, so ``pdf(support_hi)`` is the
    density of the final piece.
    """

    breakpoints: tuple[float, ...]
    densities: tuple[float, ...]
    has_closed_quantile = True
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        if b.ndim != 1 or len(b) != len(d) + 1 or len(d) == 0:
            raise ValueError("need len(breakpoints) == len(densities) + 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("densities must be non-negative")
        mass = d * np.diff(b)
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError(f"densities integrate to {mass.sum()!r}, not 1")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "densities", tuple(float(x) for x in d))
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(mass)]))

    @property
    def support_lo(self):
        return self.breakpoints[0]

    @property
    def support_hi(self):
        return self.breakpoints[-1]

    def _piece(self, v):
        b = np.asarray(self.breakpoints)
        return np.clip(np.searchsorted(b, v, side="right") - 1, 0, len(self.densities) - 1)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        b = np.asarray(self.breakpoints)
        d = np.asarray(self.densities)
        k = self._piece(v)
        out = self._cum[k] + d[k] * (np.clip(v, b[0], b[-1]) - b[k])
        return np.clip(out, 0.0, 1.0)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        d = np.asarray(self.densities)
        inside = (v >= self.support_lo) & (v <= self.support_hi)
        return np.where(inside, d[self._piece(v)], 0.0)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        b = np.asarray(self.breakpoints)
        d = np.asarray(self.densities)
        # zero-density pieces carry no mass; side="right" skips them
        k = np.clip(np.searchsorted(self._cum, q, side="right") - 1, 0, len(d) - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = b[k] + np.where(d[k] > 0, (q - self._cum[k]) / d[k], 0.0)
        return np.clip(out, b[0], b[-1])


@dataclass(frozen=True)
class DiscreteDist:
    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if a.ndim != 1 or a.shape != p.shape or len(a) == 0:
            raise ValueError("atoms and probs must be equal-length, non-empty")
        if np.any(np.diff(a) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(p <= 0):
            raise ValueError("all probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "atoms", tuple(float(x) for x in a))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @classmethod
    def degenerate(cls, value: float) -> "DiscreteDist":
        return cls((value,), (1.0,))

    @property
    def support_lo(self):
        return self.atoms[0]

    @property
    def support_hi(self):
        return self.atoms[-1]

    @property
    def cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return cum

    def cdf(self, v):
        idx = np.searchsorted(np.asarray(self.atoms), np.asarray(v, dtype=float), side="right")
        return np.concatenate([[0.0], self.cumulative])[idx]

    def sample(self, rng: np.random.Generator, size=None):
        idx = np.searchsorted(self.cumulative, rng.random(size), side="right")
        idx = np.minimum(idx, len(self.atoms) - 1)
        return np.asarray(self.atoms)[idx]


@dataclass(frozen=True)
class OracleDist:
    """A distribution the mechanism can only query through its CDF.

    ``wrapped`` is the true cost law (players' costs are drawn from it);
    the mechanism sees ``cdf_oracle`` alone and must bisect inside
    ``[bracket_lo, bracket_hi]``.
    """

    wrapped: ContinuousDist
    bracket_lo: float
    bracket_hi: float
    delta: float = 1e-4

    def __post_init__(self):
        if not self.bracket_hi > self.bracket_lo:
            raise ValueError("oracle bracket must satisfy bracket_hi > bracket_lo")
        if not self.delta > 0:
            raise ValueError("oracle delta must be positive")

    @property
    def cdf_oracle(self) -> Callable:
        return self.wrapped.cdf

    def cdf(self, v):
        return self.cdf_oracle(v)

    @property
    def support_lo(self):
        return self.wrapped.support_lo

    @property
    def support_hi(self):
        return self.wrapped.support_hi

    def sample(self, rng: np.random.Generator, size=None):
        return self.wrapped.sample(rng, size)


Distribution = Union[ContinuousDist, DiscreteDist, OracleDist]


@dataclass(frozen=True)
class NoiseSpec:
    scale_b: float

    def __post_init__(self):
        if not self.scale_b > 0:
            raise ValueError("Laplace scale must be positive")


def cdf_eval(dist: Distribution, v) -> float:
    if not np.all(np.isfinite(v)):
        raise ValueError("cdf_eval needs a finite cost")
    out = dist.cdf(v)
    return float(out) if np.ndim(out) == 0 else out


def quantile(dist: Distribution, q: float, delta: float | None = None) -> float | Bracket:
    """Locate the cost at which ``dist`` reaches probability ``q``.

    Returns a float when the quantile is hit exactly (continuous closed form or
    bisection, or a discrete atom whose CDF equals ``q``) and a :class:`Bracket`
    otherwise. Oracle distributions always produce a bracket of width below
    ``delta`` with ``F(lo) < q < F(hi)``.

    ``q == 1`` is accepted where the answer is a finite point (top atom or
    finite support end); this covers the full-sample ``c = 1`` case.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile level must lie in (0, 1], got {q!r}")
    if isinstance(dist, OracleDist):
        if q == 1.0:
            raise ValueError("oracle quantile needs q < 1")
        return _oracle_bracket(dist, q, dist.delta if delta is None else delta)
    if isinstance(dist, DiscreteDist):
        return _discrete_quantile(dist, q)
    if q == 1.0:
        if not math.isfinite(dist.support_hi):
            raise ValueError("q = 1 has no finite quantile on unbounded support")
        return float(dist.support_hi)
    return float(dist.ppf(q))


def _discrete_quantile(dist: DiscreteDist, q: float) -> float | Bracket:
    cum = dist.cumulative
    hit = np.flatnonzero(np.abs(cum - q) <= 1e-12)
    if hit.size:
        return dist.atoms[int(hit[0])]
    k = int(np.searchsorted(cum, q, side="right"))  # first atom with F > q
    if k == 0:
        return Bracket(None, dist.atoms[0], 0.0, float(cum[0]))
    return Bracket(dist.atoms[k - 1], dist.atoms[k], float(cum[k - 1]), float(cum[k]))


def _oracle_bracket(dist: OracleDist, q: float, delta: float) -> Bracket:
    if not delta > 0:
        raise ValueError("delta must be positive")
    F = lambda x: float(dist.cdf_oracle(x))  # noqa: E731
    lo, hi = dist.bracket_lo, dist.bracket_hi
    if not F(lo) < q < F(hi):
        raise ValueError(f"oracle bracket [{lo}, {hi}] does not contain the {q} quantile")

    # lower side converges to inf{F >= q}, keeping F(a) < q
    a, b = lo, hi
    while b - a >= delta / 2:
        mid = 0.5 * (a + b)
        if F(mid) < q:
            a = mid
        else:
            b = mid
    # upper side converges to sup{F <= q}, keeping F(d) > q
    c, d = lo, hi
    while d - c >= delta / 2:
        mid = 0.5 * (c + d)
        if F(mid) > q:
            d = mid
        else:
            c = mid
    if d - a >= delta:
        raise ValueError(f"oracle CDF is flat at level {q} over more than delta={delta}")
    out = Bracket(a, d, F(a), F(d))
    assert out.cdf_lo < q < out.cdf_hi
    return out


def sample_cost(dist: Distribution, rng: np.random.Generator, size=None):
    out = dist.sample(rng, size)
    return float(out) if size is None else np.asarray(out, dtype=float)


def sample_laplace(spec: NoiseSpec, rng: np.random.Generator, size=None, *, noise_off: bool = False):
    """Draw from Lap(b). ``noise_off`` is a test hook returning zeros."""
    if noise_off:
        return 0.0 if size is None else np.zeros(size)
    return rng.laplace(0.0, spec.scale_b, size)


def laplace_pdf(x, loc: float, scale_b: float):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.abs(x - loc) / scale_b) / (2.0 * scale_b)


def from_spec(spec: dict) -> Distribution:
    """Build a distribution from a config table such as ``{"kind": "uniform", "lo": 0, "hi": 1}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "uniform":
            dist = Uniform(float(spec.pop("lo", 0.0)), float(spec.pop("hi", 1.0)))
        elif kind == "exponential":
            dist = Exponential(float(spec.pop("rate", 1.0)))
        elif kind == "piecewise_density":
            dist = PiecewiseDensity(tuple(spec.pop("breakpoints")), tuple(spec.pop("densities")))
        elif kind == "discrete":
            dist = DiscreteDist(tuple(spec.pop("atoms")), tuple(spec.pop("probs")))
        elif kind == "degenerate":
            dist = DiscreteDist.degenerate(float(spec.pop("value")))
        elif kind == "oracle":
            wrapped = from_spec(spec.pop("wrapped"))
            if not isinstance(wrapped, ContinuousDist):
                raise ValueError("oracle must wrap a continuous distribution")
            dist = OracleDist(
                wrapped,
                float(spec.pop("bracket_lo")),
                float(spec.pop("bracket_hi")),
                float(spec.pop("delta", 1e-4)),
            )
        else:
            raise ValueError(f"unknown distribution kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"{kind} distribution is missing field {exc.args[0]!r}") from None
    if spec:
        raise ValueError(f"unexpected fields for {kind}: {sorted(spec)}")
    return dist


def describe(dist: Distribution) -> dict:
    """Inverse of :func:`from_spec`, used for provenance records."""
    if isinstance(dist, Uniform):
        return {"kind": "uniform", "lo": dist.lo, "hi": dist.hi}
    if isinstance(dist, Exponential):
        return {"kind": "exponential", "rate": dist.rate}
    if isinstance(dist, PiecewiseDensity):
        return {"kind": "piecewise_density", "breakpoints": list(dist.breakpoints), "densities": list(dist.densities)}
    if isinstance(dist, DiscreteDist):
        return {"kind": "discrete", "atoms": list(dist.atoms), "probs": list(dist.probs)}
    if isinstance(dist, OracleDist):
        return {
            "kind": "oracle",
            "wrapped": describe(dist.wrapped),
            "bracket_lo": dist.bracket_lo,
            "bracket_hi": dist.bracket_hi,
            "delta": dist.delta,
        }
    return {"kind": type(dist).__name__}
