"""Experiment configuration: TOML schema, validation and parameter resolution.

Schema (all experiments)::

    seed = 42                      # required, unsigned 64-bit
    replications = 2000
    experiment = "run"             # optional; the CLI subcommand wins

    [population]
    counts = [400, 600]            # players per type, or
    # database = [1, 2, 2, 1]      # explicit type list

    [[types]]                      # one table per type, in type order
    kind = "uniform"
    lo = 0.0
    hi = 1.0

    [mechanism]
    epsilon = 0.5                  # required with c
    c = 0.5                        # exactly one of c, k, budget
    target_type = 1

Per-experiment tables (``[audit]``, ``[bic]``, ``[sweep]``, ``[benchmark]``)
are described in the README.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from scipy.optimize import brentq

from . import distributions as D
from .contracts import Contract, build_contract
from .mechanism import InfeasibleError, c_for_epsilon, params_for_accuracy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("run", "audit-dp", "audit-bic", "accuracy-sweep", "benchmark")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    raw: dict
    experiment: str
    seed: int
    replications: int
    database: list[int]
    dists: list
    target_type: int = 1
    epsilon: float | None = None
    c: float | None = None
    k: float | None = None
    budget: float | None = None
    noise_off: bool = False
    sections: dict[str, dict] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.database)

    @property
    def h(self) -> int:
        return len(self.dists)

    @property
    def n_target(self) -> int:
        return sum(1 for t in self.database if t == self.target_type)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def canonical(self) -> dict:
        """Effective configuration, including command-line overrides."""
        out = dict(self.raw)
        out["experiment"] = self.experiment
        out["seed"] = self.seed
        out["noise_off"] = self.noise_off
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _number(section: dict, key: str, where: str, *, positive=False, integer=False, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"{where}: missing '{key}'")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if integer and (not isinstance(value, int)):
        raise ConfigError(f"{where}.{key} must be an integer")
    if positive and not value > 0:
        raise ConfigError(f"{where}.{key} must be positive")
    return value


def parse_config(raw: dict, *, experiment: str | None = None, seed: int | None = None, noise_off: bool = False) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    exp = experiment or raw.get("experiment", "run")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")

    if seed is None:
        if "seed" not in raw:
            raise ConfigError("a seed is required")
        seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    reps = _number(raw, "replications", "config", positive=True, integer=True, default=1)

    types = raw.get("types")
    if not isinstance(types, list) or not types:
        raise ConfigError("need a non-empty [[types]] list of distribution specs")
    try:
        dists = [D.from_spec(t) for t in types]
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad distribution spec: {exc}") from exc

    pop = raw.get("population", {})
    if ("counts" in pop) == ("database" in pop):
        raise ConfigError("population needs exactly one of 'counts' or 'database'")
    if "counts" in pop:
        counts = pop["counts"]
        if len(counts) != len(dists) or any(not isinstance(k, int) or k < 0 for k in counts):
            raise ConfigError("population.counts needs one non-negative integer per type")
        database = [j for j, k in enumerate(counts, start=1) for _ in range(k)]
    else:
        database = list(pop["database"])
        if any(not isinstance(t, int) or not 1 <= t <= len(dists) for t in database):
            raise ConfigError(f"population.database entries must lie in 1..{len(dists)}")
    if not database:
        raise ConfigError("population must have at least one player")

    mech = raw.get("mechanism", {})
    given = [key for key in ("c", "k", "budget") if key in mech]
    if len(given) != 1:
        raise ConfigError("mechanism needs exactly one of c, k, budget")
    cfg = ExperimentConfig(
        raw=raw,
        experiment=exp,
        seed=int(seed),
        replications=int(reps),
        database=database,
        dists=dists,
        target_type=int(_number(mech, "target_type", "mechanism", integer=True, default=1)),
        noise_off=noise_off,
        sections={k: raw.get(k, {}) for k in ("audit", "bic", "sweep", "benchmark")},
    )
    if not 1 <= cfg.target_type <= len(dists):
        raise ConfigError("mechanism.target_type out of range")
    if given[0] == "c":
        cfg.c = _number(mech, "c", "mechanism", positive=True)
        cfg.epsilon = _number(mech, "epsilon", "mechanism", positive=True)
        if cfg.c > 1:
            raise ConfigError("mechanism.c must lie in (0, 1]")
    else:
        if "epsilon" in mech:
            raise ConfigError(f"epsilon is derived when '{given[0]}' is given; drop it")
        setattr(cfg, given[0], _number(mech, given[0], "mechanism", positive=True))
    return cfg


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return parse_config(raw, **overrides)


@dataclass
class Resolved:
    c: float
    epsilon: float
    contract: Contract
    source: str  # which input fixed the parameters

    @property
    def gamma(self) -> float:
        return self.contract.gamma

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "source": self.source,
            "offers": self.contract.to_dict()["offers"],
        }


def _max_offer(dists, c: float) -> float:
    return max(o.upper for o in build_contract(dists, c, 1.0).offers.values())


def resolve_parameters(cfg: ExperimentConfig) -> Resolved:
    """Turn whichever of c / k / budget was given into (c, epsilon) and a contract.

    With a budget, the highest posted price depends on c, which depends on
    epsilon, so the budget equation is solved jointly in epsilon.
    """
    n = cfg.n
    if cfg.c is not None:
        c, eps, source = cfg.c, cfg.epsilon, "c"
    elif cfg.k is not None:
        c, eps = params_for_accuracy(cfg.k, n)
        source = "k"
    else:
        budget = cfg.budget
        eps_min = math.sqrt(8.0 / n)

        def excess(e: float) -> float:
            c_e = c_for_epsilon(e, n)
            return e * _max_offer(cfg.dists, c_e) * c_e * n - budget

        if excess(eps_min) >= 0:
            raise InfeasibleError(f"budget {budget} is too small for n={n}")
        hi = 2.0 * eps_min
        while excess(hi) < 0:
            hi *= 2.0
            if hi > 1e12:
                raise InfeasibleError("budget equation has no root (all offers zero?)")
        eps = brentq(excess, eps_min, hi, xtol=1e-14, rtol=1e-14)
        c = c_for_epsilon(eps, n)
        source = "budget"
    try:
        contract = build_contract(cfg.dists, c, eps)
    except ValueError as exc:
        raise ConfigError(f"cannot build contract: {exc}") from exc
    return Resolved(c, eps, contract, source)


def as_jsonable(obj: Any):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): as_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [as_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return as_jsonable(obj.item())
    return obj
