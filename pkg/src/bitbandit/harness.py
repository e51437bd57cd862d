"""Experiment harness: config files, seed fan-out, trace/summary CSVs.

Configs are YAML with an explicit ``schema`` version.  A loaded config
round-trips losslessly through :func:`config_to_dict`.  Every simulation
writes one trace CSV per seed with header ``t,inst_regret,cum_regret,bits``
plus a ``summary.csv`` over a fixed checkpoint grid; identical config and
seed produce byte-identical files.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from . import env as environment
from .env import (
    Bernoulli,
    BinarySupport,
    CustomDiscrete,
    EnvironmentSpec,
    GaussianProjected,
    RegretTrace,
    TruncatedGaussian,
)
from .known import build_action_map, misspecify_xstar, run_known, run_naive_baseline, theta_net
from .unknown import run_full_precision, run_unknown

__all__ = [
    "SCHEMA_VERSION",
    "ConfigValidationError",
    "AlgorithmConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_to_dict",
    "dump_config",
    "run_experiment",
    "ExperimentResult",
    "summarize",
    "write_summary_csv",
    "read_summary_csv",
    "default_checkpoints",
    "build_known_action_map",
    "SUMMARY_FIELDS",
]

SCHEMA_VERSION = 1

ALGORITHM_KINDS = ("known", "naive_mean", "unknown", "full_precision")

SUMMARY_FIELDS = [
    "t",
    "mean_cum_regret",
    "stddev_cum_regret",
    "ci95_lo",
    "ci95_hi",
    "mean_bits_per_round",
    "n_seeds",
]


class ConfigValidationError(ValueError):
    """Carries every violation found in a config, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in problems))


@dataclass
class AlgorithmConfig:
    kind: str
    theta_grid: list | None = None        # explicit grid for the known-dist learner
    net_points: int | None = None         # or: deterministic net of this many points
    xstar_method: str = "auto"            # auto | exact | monte-carlo
    xstar_samples: int = 100_000
    xstar_seed: int = 0
    misspec_epsilon: float = 0.0
    misspec_seed: int = 0
    ridge: float = 1.0
    solve_min_rounds: int | None = None   # unknown-dist: skip solve until this round
    pilot_rounds: int = 0                 # unknown-dist: excitation dry-run length


@dataclass
class ExperimentConfig:
    schema: int
    spec: EnvironmentSpec
    algorithm: AlgorithmConfig
    seeds: list[int]
    output_dir: str


# --------------------------------------------------------------------------
# parsing / validation
# --------------------------------------------------------------------------

def _parse_context_model(node, problems):
    kind = node.get("kind")
    try:
        if kind == "gaussian_projected":
            return GaussianProjected(scales=tuple(float(s) for s in node["scales"]))
        if kind == "binary_support":
            return BinarySupport(p_minus=tuple(float(p) for p in node["p_minus"]))
        if kind == "custom":
            actions = node["actions"]
            return CustomDiscrete(
                supports=tuple(np.asarray(a["support"], dtype=float) for a in actions),
                probs=tuple(np.asarray(a["probs"], dtype=float) for a in actions),
            )
        problems.append(f"context_model.kind must be one of "
                        f"gaussian_projected/binary_support/custom, got {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"context_model: {exc}")
    return None


def _parse_noise_model(node, problems):
    kind = node.get("kind")
    try:
        if kind == "bernoulli":
            return Bernoulli()
        if kind == "truncated_gaussian":
            return TruncatedGaussian(sigma=float(node["sigma"]))
        problems.append(f"noise_model.kind must be bernoulli or truncated_gaussian, "
                        f"got {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"noise_model: {exc}")
    return None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config dict, raising ConfigValidationError listing every problem."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigValidationError(["config root must be a mapping"])
    if raw.get("schema") != SCHEMA_VERSION:
        problems.append(f"schema must be {SCHEMA_VERSION}, got {raw.get('schema')!r}")

    env_node = raw.get("environment")
    spec = None
    if not isinstance(env_node, dict):
        problems.append("missing 'environment' section")
    else:
        cm = _parse_context_model(env_node.get("context_model", {}), problems)
        nm = _parse_noise_model(env_node.get("noise_model", {}), problems)
        if cm is not None and nm is not None:
            try:
                spec = EnvironmentSpec(
                    d=int(env_node.get("d", 0)),
                    n_actions=int(env_node.get("actions", 0)),
                    theta_star=np.asarray(env_node.get("theta_star", []), dtype=float),
                    context_model=cm,
                    noise_model=nm,
                    horizon=int(env_node.get("horizon", -1)),
                )
            except ValueError as exc:
                problems.append(str(exc))

    algo_node = raw.get("algorithm")
    algo = None
    if not isinstance(algo_node, dict):
        problems.append("missing 'algorithm' section")
    else:
        kind = algo_node.get("kind")
        if kind not in ALGORITHM_KINDS:
            problems.append(f"algorithm.kind must be one of {ALGORITHM_KINDS}, got {kind!r}")
        else:
            known_keys = {
                "kind", "theta_grid", "net_points", "xstar_method", "xstar_samples",
                "xstar_seed", "misspec_epsilon", "misspec_seed", "ridge",
                "solve_min_rounds", "pilot_rounds",
            }
            for key in algo_node:
                if key not in known_keys:
                    problems.append(f"algorithm: unknown key {key!r}")
            algo = AlgorithmConfig(
                kind=kind,
                theta_grid=algo_node.get("theta_grid"),
                net_points=algo_node.get("net_points"),
                xstar_method=algo_node.get("xstar_method", "auto"),
                xstar_samples=int(algo_node.get("xstar_samples", 100_000)),
                xstar_seed=int(algo_node.get("xstar_seed", 0)),
                misspec_epsilon=float(algo_node.get("misspec_epsilon", 0.0)),
                misspec_seed=int(algo_node.get("misspec_seed", 0)),
                ridge=float(algo_node.get("ridge", 1.0)),
                solve_min_rounds=algo_node.get("solve_min_rounds"),
                pilot_rounds=int(algo_node.get("pilot_rounds", 0)),
            )
            if kind == "known" and not algo.theta_grid and not algo.net_points:
                problems.append("known-dist learner needs theta_grid or net_points")
            if algo.xstar_method not in ("auto", "exact", "monte-carlo"):
                problems.append(f"unknown xstar_method {algo.xstar_method!r}")
            if algo.misspec_epsilon < 0:
                problems.append("misspec_epsilon must be nonnegative")
            if algo.ridge <= 0:
                problems.append("ridge must be positive")

    seeds = raw.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        problems.append("'seeds' must be a non-empty list of integers")
    elif not all(isinstance(s, int) for s in seeds):
        problems.append("'seeds' entries must be integers")
    elif len(set(seeds)) != len(seeds):
        problems.append("'seeds' entries must be distinct")

    output_dir = raw.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        problems.append("'output_dir' must be a non-empty string")

    if problems:
        raise ConfigValidationError(problems)
    return ExperimentConfig(
        schema=SCHEMA_VERSION, spec=spec, algorithm=algo,
        seeds=list(seeds), output_dir=output_dir,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


def _context_model_to_dict(cm) -> dict:
    if isinstance(cm, GaussianProjected):
        return {"kind": "gaussian_projected", "scales": list(cm.scales)}
    if isinstance(cm, BinarySupport):
        return {"kind": "binary_support", "p_minus": list(cm.p_minus)}
    if isinstance(cm, CustomDiscrete):
        return {
            "kind": "custom",
            "actions": [
                {"support": np.asarray(s, dtype=float).tolist(),
                 "probs": np.asarray(p, dtype=float).tolist()}
                for s, p in zip(cm.supports, cm.probs)
            ],
        }
    raise ValueError(f"unknown context model {type(cm).__name__}")


def _noise_model_to_dict(nm) -> dict:
    if isinstance(nm, Bernoulli):
        return {"kind": "bernoulli"}
    if isinstance(nm, TruncatedGaussian):
        return {"kind": "truncated_gaussian", "sigma": nm.sigma}
    raise ValueError(f"unknown noise model {type(nm).__name__}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-types dict that parses back to an equivalent config."""
    algo = {"kind": cfg.algorithm.kind}
    defaults = AlgorithmConfig(kind=cfg.algorithm.kind)
    for fname in ("theta_grid", "net_points", "xstar_method", "xstar_samples",
                  "xstar_seed", "misspec_epsilon", "misspec_seed", "ridge",
                  "solve_min_rounds", "pilot_rounds"):
        value = getattr(cfg.algorithm, fname)
        if value != getattr(defaults, fname):
            algo[fname] = value
    return {
        "schema": cfg.schema,
        "environment": {
            "d": cfg.spec.d,
            "actions": cfg.spec.n_actions,
            "theta_star": cfg.spec.theta_star.tolist(),
            "context_model": _context_model_to_dict(cfg.spec.context_model),
            "noise_model": _noise_model_to_dict(cfg.spec.noise_model),
            "horizon": cfg.spec.horizon,
        },
        "algorithm": algo,
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
    }


def dump_config(cfg: ExperimentConfig, path) -> None:
    """Write the config back out as YAML."""
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[RegretTrace]
    trace_paths: list[str]
    summary_rows: list[dict]
    summary_path: str


def _resolve_theta_grid(cfg: ExperimentConfig) -> np.ndarray:
    algo = cfg.algorithm
    if algo.theta_grid:
        return np.asarray(algo.theta_grid, dtype=float)
    return theta_net(cfg.spec.d, algo.net_points)


def build_known_action_map(cfg: ExperimentConfig):
    """Exact (unperturbed) action map for the known-dist learner."""
    algo = cfg.algorithm
    rng = np.random.default_rng(algo.xstar_seed)
    return build_action_map(
        cfg.spec, _resolve_theta_grid(cfg), method=algo.xstar_method,
        n_samples=algo.xstar_samples, rng=rng,
    )


def _misspecify_for_seed(cfg: ExperimentConfig, seed: int, amap):
    """Displace the map by epsilon along a direction drawn per simulation seed."""
    algo = cfg.algorithm
    if algo.misspec_epsilon <= 0:
        return amap
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(algo.misspec_seed, seed))
    )
    return misspecify_xstar(amap, algo.misspec_epsilon, rng)


def _run_one_seed(cfg: ExperimentConfig, seed: int, amap) -> RegretTrace:
    spec, algo, T = cfg.spec, cfg.algorithm, cfg.spec.horizon
    if algo.kind == "known":
        return run_known(spec, T, _misspecify_for_seed(cfg, seed, amap), seed,
                         lam=algo.ridge)
    if algo.kind == "naive_mean":
        return run_naive_baseline(spec, T, seed, lam=algo.ridge)
    if algo.kind == "unknown":
        return run_unknown(spec, T, seed, solve_min_rounds=algo.solve_min_rounds,
                           pilot_rounds=algo.pilot_rounds)
    if algo.kind == "full_precision":
        return run_full_precision(spec, T, seed, solve_min_rounds=algo.solve_min_rounds)
    raise ValueError(f"unknown algorithm kind {algo.kind!r}")


def run_experiment(cfg: ExperimentConfig, base_dir: str | None = None) -> ExperimentResult:
    """Fan the config out over its seed list and write trace + summary CSVs."""
    out_dir = cfg.output_dir
    if base_dir is not None:
        out_dir = os.path.join(base_dir, out_dir)
    os.makedirs(out_dir, exist_ok=True)
    amap = build_known_action_map(cfg) if cfg.algorithm.kind == "known" else None
    traces, paths = [], []
    for seed in cfg.seeds:
        trace = _run_one_seed(cfg, seed, amap)
        path = os.path.join(out_dir, f"trace_seed{seed:05d}.csv")
        trace.write_csv(path)
        traces.append(trace)
        paths.append(path)
    rows = summarize(traces)
    summary_path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(rows, summary_path)
    return ExperimentResult(config=cfg, traces=traces, trace_paths=paths,
                            summary_rows=rows, summary_path=summary_path)


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------

def default_checkpoints(T: int) -> list[int]:
    """Checkpoint grid {T/100, T/10, T/2, T}, floored, clamped to >= 1."""
    if T < 1:
        raise ValueError("need at least one round to summarize")
    return sorted({max(1, T // 100), max(1, T // 10), max(1, T // 2), T})


def summarize(traces: list[RegretTrace], checkpoints: list[int] | None = None) -> list[dict]:
    """Cross-seed summary rows at each checkpoint round."""
    if not traces:
        raise ValueError("no traces to summarize")
    T = len(traces[0])
    for tr in traces:
        if len(tr) != T:
            raise ValueError(
                f"trace length mismatch: expected {T} rounds, got {len(tr)}"
            )
    if checkpoints is None:
        checkpoints = default_checkpoints(T)
    if any(not 1 <= t <= T for t in checkpoints):
        raise ValueError(f"checkpoints must lie in 1..{T}")
    n = len(traces)
    bits_per_round = float(np.mean([np.mean(tr.bits) for tr in traces]))
    rows = []
    for t in checkpoints:
        vals = np.array([tr.regret_at(t) for tr in traces])
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if n > 1 else 0.0
        half = 1.96 * sd / math.sqrt(n)
        rows.append({
            "t": t,
            "mean_cum_regret": mean,
            "stddev_cum_regret": sd,
            "ci95_lo": mean - half,
            "ci95_hi": mean + half,
            "mean_bits_per_round": bits_per_round,
            "n_seeds": n,
        })
    return rows


def write_summary_csv(rows: list[dict], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for row in rows:
            writer.writerow([
                row["t"],
                repr(row["mean_cum_regret"]),
                repr(row["stddev_cum_regret"]),
                repr(row["ci95_lo"]),
                repr(row["ci95_hi"]),
                repr(row["mean_bits_per_round"]),
                row["n_seeds"],
            ])


def read_summary_csv(path) -> list[dict]:
    import csv

    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SUMMARY_FIELDS:
            raise ValueError(f"{path}: unexpected summary header {header}")
        for raw in reader:
            rows.append({
                "t": int(raw[0]),
                "mean_cum_regret": float(raw[1]),
                "stddev_cum_regret": float(raw[2]),
                "ci95_lo": float(raw[3]),
                "ci95_hi": float(raw[4]),
                "mean_bits_per_round": float(raw[5]),
                "n_seeds": int(raw[6]),
            })
    return rows
