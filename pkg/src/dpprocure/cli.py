"""Command-line experiment runner.

Every subcommand reads one TOML config, derives all randomness from its
seed, and writes ``manifest.json``, ``results.csv`` and ``summary.json``
into the output directory. Output is data only; plotting is left to the
reader's tool of choice.

Exit codes: 0 ok, 2 invalid config, 3 infeasible parameters,
4 inconclusive audit, 5 failed check.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agents import audit_bic, audit_eiir
from .benchmarks import approx_ratio_experiment, build_ironed_curve
from .contracts import build_contract
from .config import ConfigError, ExperimentConfig, Resolved, as_jsonable, load_config, resolve_parameters
from .distributions import describe, from_spec
from .mechanism import InfeasibleError, MechanismParams, accuracy_bound, params_for_accuracy, simulate_batch
from .privacy_audit import AdjacentPair, audit_estimate_dp, audit_payment_dp
from .streams import Streams

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INCONCLUSIVE, EXIT_FAIL = 0, 2, 3, 4, 5


class Outcome:
    """Rows and checks accumulated by one experiment."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[dict] = []
        self.checks: dict[str, str] = {}  # name -> pass | fail | inconclusive
        self.summary: dict = {}

    def add(self, **row) -> None:
        self.rows.append(row)

    def check(self, name: str, status) -> None:
        if isinstance(status, (bool, np.bool_)):
            status = "pass" if status else "fail"
        self.checks[name] = status

    @property
    def exit_code(self) -> int:
        statuses = set(self.checks.values())
        if "fail" in statuses:
            return EXIT_FAIL
        if "inconclusive" in statuses:
            return EXIT_INCONCLUSIVE
        return EXIT_OK


def _params(cfg: ExperimentConfig, res: Resolved) -> MechanismParams:
    return MechanismParams(res.epsilon, res.c, cfg.target_type, noise_off=cfg.noise_off)


def exp_run(cfg: ExperimentConfig, res: Resolved, streams: Streams) -> Outcome:
    out = Outcome(["replication", "s_hat", "raw_s", "m", "n_accepted", "total_payment"])
    R = cfg.replications
    batch = simulate_batch(cfg.database, cfg.dists, res.contract, _params(cfg, res), R, streams)
    for r in range(R):
        out.add(
            replication=r,
            s_hat=float(batch.s_hat[r]),
            raw_s=float(batch.raw_s[r]),
            m=int(batch.m[r]),
            n_accepted=int(batch.n_accepted[r]),
            total_payment=float(batch.total_payment[r]),
        )
    n1 = cfg.n_target
    bound = accuracy_bound(n1, res.c, res.epsilon)
    miss = float(np.mean(np.abs(batch.s_hat - n1) >= bound))
    out.summary = {
        "n": cfg.n,
        "n_target": n1,
        "mean_s_hat": float(batch.s_hat.mean()),
        "mean_raw_s": float(batch.raw_s.mean()),
        "accuracy_bound": bound,
        "miss_fraction": miss,
        "mean_total_payment": float(batch.total_payment.mean()),
    }
    out.summary["s_hat_equals_n_target"] = bool(np.all(batch.s_hat == n1))
    if R >= 2:
        sigma = math.sqrt((n1 * res.c * (1 - res.c) + (0.0 if cfg.noise_off else 2.0 / res.epsilon**2))) / res.c
        out.check("unbiased", abs(batch.raw_s.mean() - n1) <= 3 * sigma / math.sqrt(R) + 1e-9)
        out.check("accuracy", miss <= 1 / 3 + 3 * math.sqrt((2 / 9) / R))
    return out


def exp_accuracy_sweep(cfg: ExperimentConfig, res: Resolved, streams: Streams) -> Outcome:
    """Empirical miss rate against the accuracy bound, for a list of k values."""
    out = Outcome(["k", "c", "epsilon", "n_target", "accuracy_bound", "miss_fraction", "mean_raw_s", "bound_ok"])
    sweep = cfg.section("sweep")
    ks = sweep.get("k_values") or ([cfg.k] if cfg.k is not None else [])
    n1 = cfg.n_target
    R = cfg.replications
    rows_ok = True
    if not ks:
        # c/budget mode: one point at the resolved parameters
        ks = [None]
    for idx, k in enumerate(ks):
        if k is None:
            c, eps, contract = res.c, res.epsilon, res.contract
        else:
            if not isinstance(k, (int, float)) or not k > 0:
                raise ConfigError("sweep.k_values must be positive numbers")
            c, eps = params_for_accuracy(float(k), cfg.n)
            contract = build_contract(cfg.dists, c, eps)
        params = MechanismParams(eps, c, cfg.target_type, noise_off=cfg.noise_off)
        batch = simulate_batch(cfg.database, cfg.dists, contract, params, R, streams.child(f"k/{idx}"))
        bound = accuracy_bound(n1, c, eps)
        miss = float(np.mean(np.abs(batch.s_hat - n1) >= bound))
        ok = bound <= (k if k is not None else math.inf)
        rows_ok &= ok
        out.add(k=k, c=c, epsilon=eps, n_target=n1, accuracy_bound=bound, miss_fraction=miss,
                mean_raw_s=float(batch.raw_s.mean()), bound_ok=ok)
        out.check(f"miss_rate[{idx}]", miss <= 1 / 3 + 3 * math.sqrt((2 / 9) / R))
    out.check("bound_le_k", rows_ok)
    out.summary = {"points": len(ks), "n": cfg.n, "n_target": n1}
    return out


def exp_audit_dp(cfg: ExperimentConfig, res: Resolved, streams: Streams) -> Outcome:
    sec = cfg.section("audit")
    idx = int(sec.get("flipped_index", 0))
    if not 0 <= idx < cfg.n:
        raise ConfigError("audit.flipped_index out of range")
    flip_to = int(sec.get("flip_to", 1 if cfg.database[idx] != 1 else min(2, cfg.h)))
    if not 1 <= flip_to <= cfg.h:
        raise ConfigError("audit.flip_to out of range")
    pair = AdjacentPair.flip(cfg.database, idx, flip_to)
    samples = int(sec.get("samples", 200_000))
    bins = int(sec.get("bins", 20))
    slack = float(sec.get("slack", 1.1))
    which = sec.get("statistic", "both")
    if which not in ("estimate", "payment", "both"):
        raise ConfigError("audit.statistic must be estimate, payment or both")
    targets = sec.get("epsilon_targets", [res.epsilon])
    params = _params(cfg, res)
    out = Outcome(["statistic", "epsilon_target", "slack", "bins", "qualifying_bins", "min_bin_count",
                   "max_log_ratio", "direction", "status", "coverage"])
    for stat in (("estimate", "payment") if which == "both" else (which,)):
        for target in targets:
            sub = streams.child(f"audit/{stat}")  # same draws for every target
            if stat == "estimate":
                rep = audit_estimate_dp(pair, cfg.dists, params, samples, bins, slack, sub, epsilon_target=target)
            else:
                rep = audit_payment_dp(pair, cfg.dists, params, idx, samples, bins, slack, sub, epsilon_target=target)
            d = rep.to_dict()
            out.add(statistic=stat, **{k: d[k] for k in out.columns if k in d})
            out.check(f"{stat}@{target:g}", rep.status)
            out.summary[f"{stat}@{target:g}"] = d
    return out


def exp_audit_bic(cfg: ExperimentConfig, res: Resolved, streams: Streams) -> Outcome:
    sec = cfg.section("bic")
    idx = int(sec.get("player_index", 0))
    if not 0 <= idx < cfg.n:
        raise ConfigError("bic.player_index out of range")
    R = cfg.replications
    if R < 1000:
        raise ConfigError("audit-bic needs replications >= 1000")
    grid = sec.get("cost_grid")
    rows = audit_bic(res.contract, cfg.dists, cfg.database, idx, replications=R, rng=streams.child("bic"),
                     cost_grid=grid, target_type=cfg.target_type)
    out = Outcome(["deviation", "v_i", "utility_gap", "ci_halfwidth", "replications", "truthful_utility"])
    for row in rows:
        d = row.to_dict()
        out.add(**{k: d[k] for k in out.columns})
    out.check("bic", all(r.utility_gap >= -r.ci_halfwidth for r in rows))
    eiir = audit_eiir(res.contract, cfg.dists, cfg.database, R, streams.child("eiir"), target_type=cfg.target_type)
    out.check("eiir", all(r.mean_utility >= -r.ci_halfwidth for r in eiir))
    out.summary = {"eiir": [r.to_dict() for r in eiir], "rows": len(rows)}
    return out


def exp_benchmark(cfg: ExperimentConfig, res: Resolved, streams: Streams) -> Outcome:
    sec = cfg.section("benchmark")
    try:
        dist = from_spec(sec["dist"]) if "dist" in sec else cfg.dists[0]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad benchmark.dist: {exc}") from exc
    n = int(sec.get("n", cfg.n))
    ws = sec.get("w_values", [n // 2])
    kind = sec.get("kind", "envy_free")
    if kind not in ("envy_free", "myerson"):
        raise ConfigError("benchmark.kind must be envy_free or myerson")
    dist_id = sec.get("dist_id", describe(dist)["kind"])
    curve = build_ironed_curve(dist) if kind == "myerson" else None
    out = Outcome(["dist_id", "n", "w", "mech_payment", "benchmark_payment", "ratio", "bound", "r", "pass"])
    for i, w in enumerate(ws):
        if not isinstance(w, int) or not 1 <= w < n:
            raise ConfigError("benchmark.w_values must be integers in [1, n)")
        rep = approx_ratio_experiment(dist, n, w, cfg.replications, streams.get(f"benchmark/{i}"),
                                      benchmark=kind, curve=curve)
        out.add(dist_id=dist_id, n=n, w=w, mech_payment=rep["mech_payment"], benchmark_payment=rep["benchmark_payment"],
                ratio=rep["ratio"], bound=rep["bound"], r=rep["r"], **{"pass": rep["pass"]})
        out.check(f"ratio[w={w}]", "inconclusive" if rep["pass"] is None else rep["pass"])
    out.summary = {"kind": kind, "dist": describe(dist)}
    return out


RUNNERS = {
    "run": exp_run,
    "accuracy-sweep": exp_accuracy_sweep,
    "audit-dp": exp_audit_dp,
    "audit-bic": exp_audit_bic,
    "benchmark": exp_benchmark,
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def render_csv(outcome: Outcome, seed: int, config_hash: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["seed", "config_hash", *outcome.columns])
    for row in outcome.rows:
        writer.writerow([seed, config_hash, *(_fmt(row.get(c)) for c in outcome.columns)])
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> str:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _dump(obj) -> str:
    return json.dumps(as_jsonable(obj), indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: Path) -> int:
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    res = resolve_parameters(cfg)
    outcome = RUNNERS[cfg.experiment](cfg, res, Streams(cfg.seed))
    chash = cfg.config_hash()
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_hash": chash,
        "checks": outcome.checks,
        "exit_code": outcome.exit_code,
        **outcome.summary,
    }
    artifacts = {
        "results.csv": _write_atomic(out_dir / "results.csv", render_csv(outcome, cfg.seed, chash)),
        "summary.json": _write_atomic(out_dir / "summary.json", _dump(summary)),
    }
    manifest = {
        "tool": "dpprocure",
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.canonical(),
        "config_hash": chash,
        "resolved": res.to_dict(),
        "started_at": started,
        "finished_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "artifacts": [{"file": k, "sha256": v} for k, v in artifacts.items()],
    }
    _write_atomic(out_dir / "manifest.json", _dump(manifest))
    return outcome.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpprocure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*RUNNERS, "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if name != "validate":
            p.add_argument("--out", type=Path, default=Path("out"))
            p.add_argument("--noise-off", action="store_true", help="zero all Laplace noise (testing only)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    experiment = None if args.command == "validate" else args.command
    try:
        cfg = load_config(args.config, experiment=experiment, seed=args.seed,
                          noise_off=getattr(args, "noise_off", False))
        if args.command == "validate":
            res = resolve_parameters(cfg)
            print(json.dumps(as_jsonable({"experiment": cfg.experiment, "n": cfg.n, "h": cfg.h,
                                          "config_hash": cfg.config_hash(), "resolved": res.to_dict()}),
                             indent=2, sort_keys=True))
            return EXIT_OK
        code = run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{args.command}: wrote {args.out} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
