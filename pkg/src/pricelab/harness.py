"""Experiment orchestration: config, trials, aggregation, persistence.

A run executes independent trials of one policy in one environment,
each trial seeded from (master seed, trial id), and writes one CSV per
trial plus an aggregate CSV and a JSON summary. The module also houses
the reporting transforms: averaged regret, the adjusted log-regret
series whose slope against log T exposes the regret growth exponent,
and the least-squares slope diagnostic.
"""

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from .baselines import linear_kernel_policy, rmlp2_policy
from .market import MarketEnvironment, calibration_env, quadratic_sim_env
from .policy import (
    AlgorithmConfig,
    EpisodeSchedule,
    RegretTrace,
    run_algorithm1,
    run_oracle_policy,
    run_uniform_policy,
)

__all__ = [
    "RunConfig",
    "RegretTrace",
    "AggregateStats",
    "POLICIES",
    "load_config",
    "build_environment",
    "run_single_trial",
    "run_trials",
    "adjusted_log_regret",
    "exploitation_average",
    "slope_diagnostic",
    "report",
]

POLICIES = ("dnn", "tdnn", "linear_kernel", "rmlp2", "oracle", "uniform_random")
_ENVIRONMENTS = ("quadratic_sim", "calibration")
DEFAULT_T0 = 1500

CSV_HEADER = [
    "trial",
    "t",
    "episode",
    "phase",
    "price",
    "oracle_price",
    "exp_revenue",
    "oracle_revenue",
    "instant_regret",
    "cum_regret",
]


@dataclass(frozen=True)
class RunConfig:
    """One experiment: environment, policy, schedule and fit settings."""

    environment: str
    policy: str
    n0: int = 200
    episodes: int = 6
    m: int = 2
    bandwidth_c: float = 6.0
    exploration_rule: str = "smoothness"
    eps_floor: float = 1e-3
    trials: int = 1
    seed: int = 0
    out_dir: str = "runs"
    B: Optional[float] = None
    dimension: Optional[int] = None
    beta: Optional[tuple] = None

    def __post_init__(self):
        if self.environment not in _ENVIRONMENTS:
            raise ValueError(
                f"config field 'environment' must be one of {_ENVIRONMENTS}, "
                f"got {self.environment!r}"
            )
        if self.policy not in POLICIES:
            raise ValueError(
                f"config field 'policy' must be one of {POLICIES}, got {self.policy!r}"
            )
        if self.n0 < 2:
            raise ValueError("config field 'n0' must be at least 2")
        if self.episodes < 1:
            raise ValueError("config field 'episodes' must be at least 1")
        if self.m < 2:
            raise ValueError("config field 'm' must be at least 2")
        if self.bandwidth_c <= 0:
            raise ValueError("config field 'bandwidth_c' must be positive")
        if self.exploration_rule not in ("smoothness", "dimension", "tdnn"):
            raise ValueError(
                "config field 'exploration_rule' must be smoothness, dimension "
                f"or tdnn, got {self.exploration_rule!r}"
            )
        if self.eps_floor <= 0:
            raise ValueError("config field 'eps_floor' must be positive")
        if self.trials < 1:
            raise ValueError("config field 'trials' must be at least 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("config field 'seed' must be a nonnegative integer")
        if self.B is not None and self.B <= 0:
            raise ValueError("config field 'B' must be positive")
        if self.environment == "calibration":
            if self.beta is None or len(self.beta) == 0:
                raise ValueError(
                    "config field 'beta' is required for the calibration environment"
                )
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
            if self.dimension is not None and self.dimension != len(self.beta):
                raise ValueError(
                    "config field 'dimension' must match the length of 'beta'"
                )
        else:
            if self.beta is not None:
                raise ValueError(
                    "config field 'beta' only applies to the calibration environment"
                )
            if self.dimension is not None and self.dimension != 3:
                raise ValueError(
                    "config field 'dimension' must be 3 for quadratic_sim"
                )


def load_config(path) -> RunConfig:
    """Parse a TOML config file into a RunConfig, rejecting unknown keys."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("environment", "policy"):
        if key not in raw:
            raise ValueError(f"config field {key!r} is required")
    return RunConfig(**raw)


def build_environment(config: RunConfig) -> MarketEnvironment:
    if config.environment == "quadratic_sim":
        return quadratic_sim_env(6.5 if config.B is None else config.B)
    return calibration_env(config.beta, 6.0 if config.B is None else config.B)


def _algorithm_config(config: RunConfig) -> AlgorithmConfig:
    estimator = config.policy if config.policy in ("dnn", "tdnn") else "dnn"
    return AlgorithmConfig(
        estimator=estimator,
        n0=config.n0,
        episodes=config.episodes,
        m=config.m,
        bandwidth_c=config.bandwidth_c,
        exploration_rule=config.exploration_rule,
        eps_floor=config.eps_floor,
    )


_RUNNERS = {
    "dnn": run_algorithm1,
    "tdnn": run_algorithm1,
    "linear_kernel": linear_kernel_policy,
    "rmlp2": rmlp2_policy,
    "oracle": run_oracle_policy,
    "uniform_random": run_uniform_policy,
}


def run_single_trial(config: RunConfig, trial: int) -> RegretTrace:
    """Run one trial with its own rng stream derived from (seed, trial)."""
    env = build_environment(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, trial]))
    trace = _RUNNERS[config.policy](env, _algorithm_config(config), rng)
    trace.trial = trial
    trace.seed = (config.seed, trial)
    return trace


@dataclass(eq=False)
class AggregateStats:
    """Cross-trial aggregates of the cumulative regret curve."""

    t: np.ndarray
    mean_reg: np.ndarray
    se_reg: np.ndarray
    final_regret: float
    ave_reg: float
    ave_reg_commit: Optional[float]
    rtilde: np.ndarray
    t0: int
    dimension: int
    trials: int
    counters: dict

    def __post_init__(self):
        n = self.t.shape[0]
        for name in ("mean_reg", "se_reg", "rtilde"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"aggregate field {name} length mismatch")
        if np.any(self.se_reg < 0):
            raise ValueError("standard errors must be nonnegative")


def _float_cell(x: float) -> str:
    return f"{x:.17g}"


def _write_trial_csv(path: Path, trace: RegretTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(trace.horizon):
            writer.writerow(
                [
                    trace.trial,
                    int(trace.t[i]),
                    int(trace.episode[i]),
                    trace.phase[i],
                    _float_cell(trace.price[i]),
                    _float_cell(trace.oracle_price[i]),
                    _float_cell(trace.exp_revenue[i]),
                    _float_cell(trace.oracle_revenue[i]),
                    _float_cell(trace.instant_regret[i]),
                    _float_cell(trace.cum_regret[i]),
                ]
            )


def _aggregate(
    reg_curves: np.ndarray,
    commit_means: list,
    counters: dict,
    dimension: int,
    t0: int = DEFAULT_T0,
) -> AggregateStats:
    trials, horizon = reg_curves.shape
    t = np.arange(1, horizon + 1)
    mean_reg = reg_curves.mean(axis=0)
    if trials > 1:
        se_reg = reg_curves.std(axis=0, ddof=1) / math.sqrt(trials)
    else:
        se_reg = np.zeros(horizon)
    try:
        rtilde = adjusted_log_regret(mean_reg, dimension, t0=t0)
    except ValueError:
        rtilde = np.full(horizon, np.nan)
    commit_vals = [c for c in commit_means if c is not None]
    ave_reg_commit = float(np.mean(commit_vals)) if commit_vals else None
    return AggregateStats(
        t=t,
        mean_reg=mean_reg,
        se_reg=se_reg,
        final_regret=float(mean_reg[-1]),
        ave_reg=float(mean_reg[-1] / horizon),
        ave_reg_commit=ave_reg_commit,
        rtilde=rtilde,
        t0=t0,
        dimension=dimension,
        trials=trials,
        counters=counters,
    )


def default_slope_window(config: RunConfig) -> tuple:
    """Period range of the last three episodes (fewer when K < 3)."""
    first = max(1, config.episodes - 2)
    start = (2 ** (first - 1) - 1) * config.n0 + 1
    end = (2**config.episodes - 1) * config.n0
    return start, end


def _summary_payload(config: RunConfig, stats: AggregateStats) -> dict:
    window = default_slope_window(config)
    try:
        slope = slope_diagnostic(stats, window)
    except ValueError:
        slope, window = None, None
    return {
        "config": dataclasses.asdict(config),
        "policy": config.policy,
        "trials": stats.trials,
        "horizon": int(stats.t[-1]),
        "final_regret": stats.final_regret,
        "ave_reg": stats.ave_reg,
        "ave_reg_commit": stats.ave_reg_commit,
        "slope_diagnostic": slope,
        "slope_window": list(window) if window else None,
        "counters": stats.counters,
    }


def _persist(out_dir: Path, config: RunConfig, traces: list, stats: AggregateStats):
    out_dir.mkdir(parents=True, exist_ok=True)
    for trace in traces:
        _write_trial_csv(out_dir / f"trial_{trace.trial:04d}.csv", trace)
    with open(out_dir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean_cum_regret", "se_cum_regret"])
        for i in range(stats.t.shape[0]):
            writer.writerow(
                [
                    int(stats.t[i]),
                    _float_cell(stats.mean_reg[i]),
                    _float_cell(stats.se_reg[i]),
                ]
            )
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_summary_payload(config, stats), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_trials(config: RunConfig) -> AggregateStats:
    """Execute all trials, persist artifacts, and return the aggregates."""
    traces = []
    for trial in range(config.trials):
        traces.append(run_single_trial(config, trial))
    reg_curves = np.stack([tr.cum_regret for tr in traces])
    commit_means = []
    counters: dict = {}
    for tr in traces:
        commit = tr.instant_regret[tr.phase == "com"]
        commit_means.append(float(commit.mean()) if commit.size else None)
        for key, value in tr.counters.items():
            counters[key] = counters.get(key, 0) + value
    env = build_environment(config)
    stats = _aggregate(reg_curves, commit_means, counters, env.dimension)
    _persist(Path(config.out_dir), config, traces, stats)
    return stats


def adjusted_log_regret(reg, d: int, t0: int = DEFAULT_T0, t=None) -> np.ndarray:
    """log Reg(T) minus the polylog envelope, referenced to zero at T0.

    Computes log Reg(T) - 2 log log T - log(d log T), subtracting the
    same expression at T0, for every period where it is defined
    (T > e and Reg(T) > 0); other entries are NaN.
    """
    reg = np.asarray(reg, dtype=float)
    t = np.arange(1, reg.size + 1, dtype=float) if t is None else np.asarray(t, dtype=float)
    if t.shape != reg.shape:
        raise ValueError("regret series and period grid must share length")
    ref = np.flatnonzero(t == t0)
    if ref.size == 0:
        raise ValueError(f"reference T0={t0} is not on the recorded horizon")
    if reg[ref[0]] <= 0:
        raise ValueError(f"regret at T0={t0} must be positive")
    valid = (t > math.e) & (reg > 0)
    out = np.full(reg.shape, np.nan)
    logt = np.log(t[valid])
    out[valid] = np.log(reg[valid]) - 2.0 * np.log(np.log(t[valid])) - np.log(d * logt)
    out -= out[ref[0]]
    return out


def exploitation_average(trace: RegretTrace) -> np.ndarray:
    """Running mean of instant regret over the commitment periods."""
    mask = trace.phase == "com"
    vals = trace.instant_regret[mask]
    if vals.size == 0:
        return vals
    return np.cumsum(vals) / np.arange(1, vals.size + 1)


def slope_diagnostic(stats: AggregateStats, window: tuple) -> float:
    """Least-squares slope of rtilde against log T - log T0 over a window."""
    lo, hi = window
    mask = (stats.t >= lo) & (stats.t <= hi) & np.isfinite(stats.rtilde)
    if mask.sum() < 2:
        raise ValueError("slope window contains fewer than two usable points")
    x = np.log(stats.t[mask]) - math.log(stats.t0)
    slope, _ = np.polyfit(x, stats.rtilde[mask], 1)
    return float(slope)


def report(input_dir) -> AggregateStats:
    """Recompute aggregates and diagnostics from the per-trial CSVs."""
    input_dir = Path(input_dir)
    trial_files = sorted(input_dir.glob("trial_*.csv"))
    if not trial_files:
        raise ValueError(f"no trial CSVs found under {input_dir}")
    summary_path = input_dir / "summary.json"
    if not summary_path.exists():
        raise ValueError(
            f"missing {summary_path}; reporting needs the run's config echo"
        )
    with open(summary_path) as fh:
        payload = json.load(fh)
    config = RunConfig(**{
        k: (tuple(v) if k == "beta" and v is not None else v)
        for k, v in payload["config"].items()
    })
    curves = []
    commit_means = []
    for path in trial_files:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ValueError(f"unexpected CSV header in {path}")
            rows = list(reader)
        curves.append(np.array([float(r[9]) for r in rows]))
        commit = np.array([float(r[8]) for r in rows if r[3] == "com"])
        commit_means.append(float(commit.mean()) if commit.size else None)
    reg_curves = np.stack(curves)
    env = build_environment(config)
    stats = _aggregate(
        reg_curves, commit_means, payload.get("counters", {}), env.dimension
    )
    with open(input_dir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean_cum_regret", "se_cum_regret"])
        for i in range(stats.t.shape[0]):
            writer.writerow(
                [
                    int(stats.t[i]),
                    _float_cell(stats.mean_reg[i]),
                    _float_cell(stats.se_reg[i]),
                ]
            )
    with open(summary_path, "w") as fh:
        json.dump(_summary_payload(config, stats), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return stats
