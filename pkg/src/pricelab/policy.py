"""Pricing decisions and the episodic explore-then-commit loop.

The optimal price for a buyer with mean utility v solves a first-order
condition through the virtual valuation map phi(z) = z - (1-F(z))/F'(z):
the price is v + phi^{-1}(-v), clipped to [0, B]. This module builds phi
from a true or estimated CDF (with a floored derivative), inverts it
numerically (Newton through a logistic reparameterization, with a
bracketing bisection fallback), schedules episodes that double in
length, and runs the full loop: explore with uniform prices, fit, then
commit to the fitted pricing rule for the rest of the episode.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .market import (
    MarketEnvironment,
    NoiseSpec,
    expected_revenue,
    mean_utility,
    noise_cdf_true,
    oracle_price,
    realize_demand,
    sample_context,
    sample_noise,
)
from .neighbors import LabeledSample, choose_scales, dnn_weights, order_by_distance
from .noisecdf import (
    DEFAULT_EPS_FLOOR,
    CdfEstimate,
    cdf_deriv_floored,
    cdf_estimate,
    fit_cdf,
    fused_evaluator,
    bandwidth,
)

__all__ = [
    "PhiFunction",
    "EpisodeSchedule",
    "AlgorithmConfig",
    "RegretTrace",
    "phi_eval",
    "phi_inverse",
    "price_map",
    "explore_price",
    "exploration_length",
    "run_algorithm1",
    "run_oracle_policy",
    "run_uniform_policy",
]

_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-9
_NEWTON_DIFF_STEP = 1e-5
_FALLBACK_GRID = 512
_BISECT_WIDTH = 1e-13

EXPLORE_TAG = "exp"
COMMIT_TAG = "com"

_RULES = ("smoothness", "dimension", "tdnn")


def _new_counters() -> dict:
    return {"clamp_low": 0, "clamp_high": 0, "newton_fallback": 0}


@dataclass(eq=False)
class PhiFunction:
    """Virtual valuation map built from a CDF and its floored derivative.

    ``cdf`` and ``deriv`` are vectorized; ``deriv`` is already floored at
    ``eps_floor`` so phi is finite everywhere on [lo, hi]. ``fused``, when
    present, returns (F(z), F'(z)) from one pass over the data and is
    used on the scalar hot path. ``counters`` accumulates clamp and
    fallback diagnostics across inversions.
    """

    cdf: Callable
    deriv: Callable
    lo: float
    hi: float
    eps_floor: float = DEFAULT_EPS_FLOOR
    fused: Optional[Callable] = None
    counters: dict = field(default_factory=_new_counters)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("working interval must satisfy lo < hi")
        if self.eps_floor <= 0:
            raise ValueError("derivative floor must be positive")
        for key, value in _new_counters().items():
            self.counters.setdefault(key, value)
        self._grid_cache = None

    @classmethod
    def from_true_noise(cls, spec: NoiseSpec, lo=None, hi=None,
                        eps_floor: float = DEFAULT_EPS_FLOOR, counters=None):
        """Phi from the exact noise law, derivative floored at eps_floor."""
        if lo is None:
            lo = -(spec.half_width + 0.5)
        if hi is None:
            hi = spec.half_width + 0.5

        def deriv(z):
            return np.maximum(spec.pdf(z), eps_floor)

        kwargs = {} if counters is None else {"counters": counters}
        return cls(lambda z: noise_cdf_true(spec, z), deriv, lo, hi, eps_floor,
                   **kwargs)

    @classmethod
    def from_cdf_estimate(cls, est: CdfEstimate, lo: float, hi: float,
                          counters=None):
        """Phi from a fitted CDF estimate; floor taken from the estimate."""
        kwargs = {} if counters is None else {"counters": counters}
        return cls(
            lambda z: cdf_estimate(est, z),
            lambda z: cdf_deriv_floored(est, z),
            lo,
            hi,
            est.eps_floor,
            fused=fused_evaluator(est),
            **kwargs,
        )

    @classmethod
    def from_gaussian(cls, sigma: float, lo=None, hi=None,
                      eps_floor: float = DEFAULT_EPS_FLOOR, counters=None):
        """Phi for Gaussian noise with standard deviation sigma."""
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if lo is None:
            lo = -6.0 * sigma
        if hi is None:
            hi = 6.0 * sigma
        inv_norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

        def cdf(z):
            return ndtr(np.asarray(z, dtype=float) / sigma)

        def deriv(z):
            z = np.asarray(z, dtype=float)
            return np.maximum(
                inv_norm * np.exp(-0.5 * (z / sigma) ** 2), eps_floor
            )

        kwargs = {} if counters is None else {"counters": counters}
        return cls(cdf, deriv, lo, hi, eps_floor, **kwargs)


def phi_eval(phi: PhiFunction, z):
    """phi(z) = z - (1 - F(z)) / F'(z) with the floored derivative."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 and phi.fused is not None:
        f, f1 = phi.fused(float(z))
        return float(z) - (1.0 - f) / f1
    out = z - (1.0 - np.asarray(phi.cdf(z), dtype=float)) / np.asarray(
        phi.deriv(z), dtype=float
    )
    return float(out) if out.ndim == 0 else out


def _phi_scalar(phi: PhiFunction, z: float) -> float:
    if phi.fused is not None:
        f, f1 = phi.fused(z)
        return z - (1.0 - f) / f1
    return z - (1.0 - float(phi.cdf(z))) / float(phi.deriv(z))


def _sigmoid(y: float) -> float:
    if y >= 0.0:
        return 1.0 / (1.0 + math.exp(-y))
    e = math.exp(y)
    return e / (1.0 + e)


def _transform(y: float, lo: float, hi: float) -> float:
    # Logistic reparameterization of (lo, hi); y=0 maps to the midpoint.
    return hi - (hi - lo) * _sigmoid(y)


def phi_inverse(phi: PhiFunction, target: float) -> float:
    """Solve phi(z) = target on [lo, hi]; total by clamping.

    Newton iteration runs on the logistic reparameterization from the
    interval midpoint, with a numeric central-difference slope. If it
    fails to converge, a 512-point scan locates the leftmost bracketing
    pair for bisection (the inverse of a non-monotone phi is taken as the
    smallest solution). Targets outside the range of phi return the
    matching endpoint and bump a clamp counter.
    """
    target = float(target)
    lo, hi = phi.lo, phi.hi
    width = hi - lo
    fused = phi.fused
    if fused is not None:

        def geval(yv):
            x = hi - width * _sigmoid(yv)
            f, f1 = fused(x)
            return x, x - (1.0 - f) / f1 - target

    else:
        cdf, deriv = phi.cdf, phi.deriv

        def geval(yv):
            x = hi - width * _sigmoid(yv)
            return x, x - (1.0 - float(cdf(x))) / float(deriv(x)) - target

    y = 0.0
    h = _NEWTON_DIFF_STEP
    y_prev, y_prev2 = math.nan, math.nan
    for _ in range(_NEWTON_MAX_ITER):
        x, g = geval(y)
        if abs(g) <= _NEWTON_TOL:
            return x
        _, g_plus = geval(y + h)
        _, g_minus = geval(y - h)
        slope = (g_plus - g_minus) / (2.0 * h)
        if not math.isfinite(slope) or slope == 0.0:
            break
        step = g / slope
        if not math.isfinite(step):
            break
        y_prev2, y_prev = y_prev, y
        y = min(max(y - step, -500.0), 500.0)
        # A repeated iterate means a limit cycle: Newton has failed.
        if y == y_prev or y == y_prev2:
            break
    phi.counters["newton_fallback"] += 1

    if phi._grid_cache is None:
        grid = np.linspace(lo, hi, _FALLBACK_GRID)
        phi._grid_cache = (grid, np.array([_phi_scalar(phi, g) for g in grid]))
    grid, phi_vals = phi._grid_cache
    vals = phi_vals - target
    above = vals >= 0.0
    if not above.any():
        phi.counters["clamp_high"] += 1
        return hi
    i = int(np.argmax(above))
    if i == 0:
        if vals[0] > _NEWTON_TOL:
            phi.counters["clamp_low"] += 1
        return lo
    a, b = float(grid[i - 1]), float(grid[i])
    while b - a > _BISECT_WIDTH:
        mid = 0.5 * (a + b)
        g = _phi_scalar(phi, mid) - target
        if abs(g) <= _NEWTON_TOL:
            return mid
        if g < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def price_map(phi: PhiFunction, v: float, price_bound: float) -> float:
    """Greedy price v + phi^{-1}(-v), clipped to [0, B]."""
    p = v + phi_inverse(phi, -v)
    return min(max(p, 0.0), price_bound)


def explore_price(rng: np.random.Generator, price_bound: float) -> float:
    """Uniform exploration price on [0, B]."""
    if price_bound <= 0:
        raise ValueError("price bound must be positive")
    return float(rng.uniform(0.0, price_bound))


def exploration_length(n_k: int, d: int, m: int, rule: str = "smoothness") -> int:
    """Exploration length for an episode of length n_k.

    smoothness: (d n_k)^((2m+1)/(4m-1)); dimension: (d n_k)^((d+4)/(d+8));
    tdnn: (d n_k)^(max of the two exponents and 7/13). Floored, then
    clamped to [1, n_k - 1].
    """
    if n_k < 2:
        raise ValueError("episode length must be at least 2")
    if rule == "smoothness":
        expo = (2 * m + 1) / (4 * m - 1)
    elif rule == "dimension":
        expo = (d + 4) / (d + 8)
    elif rule == "tdnn":
        expo = max((2 * m + 1) / (4 * m - 1), (d + 8) / (d + 16), 7.0 / 13.0)
    else:
        raise ValueError(f"unknown exploration rule {rule!r}")
    n_exp = int(math.floor((d * n_k) ** expo))
    return min(max(n_exp, 1), n_k - 1)


@dataclass(frozen=True)
class EpisodeSchedule:
    """Doubling episodes: episode k has length 2^(k-1) n0.

    Each episode opens with an exploration block whose length follows the
    configured rule; the rest is the commitment block. Episodes tile the
    horizon consecutively.
    """

    n0: int
    episodes: int
    dimension: int
    smoothness: int = 2
    rule: str = "smoothness"

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("minimal episode length n0 must be at least 2")
        if self.episodes < 1:
            raise ValueError("episode count must be at least 1")
        if self.rule not in _RULES:
            raise ValueError(f"unknown exploration rule {self.rule!r}")

    def length(self, k: int) -> int:
        return 2 ** (k - 1) * self.n0

    def explore_length(self, k: int) -> int:
        return exploration_length(
            self.length(k), self.dimension, self.smoothness, self.rule
        )

    @property
    def horizon(self) -> int:
        return (2**self.episodes - 1) * self.n0

    def blocks(self):
        """Yield (k, episode length, exploration length) for each episode."""
        for k in range(1, self.episodes + 1):
            n_k = self.length(k)
            yield k, n_k, self.explore_length(k)


@dataclass(frozen=True)
class AlgorithmConfig:
    """Knobs for one policy run (estimator choice plus schedule/fit settings)."""

    estimator: str = "dnn"
    n0: int = 200
    episodes: int = 6
    m: int = 2
    bandwidth_c: float = 6.0
    exploration_rule: str = "smoothness"
    eps_floor: float = DEFAULT_EPS_FLOOR
    interval: Optional[tuple] = None

    def __post_init__(self):
        if self.estimator not in ("dnn", "tdnn"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    def working_interval(self, noise: NoiseSpec):
        if self.interval is not None:
            lo, hi = self.interval
            return float(lo), float(hi)
        return -(noise.half_width + 0.5), noise.half_width + 0.5


@dataclass(eq=False)
class RegretTrace:
    """Per-period log of one trial: prices, revenues, and regret."""

    t: np.ndarray
    episode: np.ndarray
    phase: np.ndarray
    price: np.ndarray
    oracle_price: np.ndarray
    exp_revenue: np.ndarray
    oracle_revenue: np.ndarray
    instant_regret: np.ndarray
    cum_regret: np.ndarray
    trial: int = 0
    seed: object = None
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.t.shape[0]
        for name in (
            "episode",
            "phase",
            "price",
            "oracle_price",
            "exp_revenue",
            "oracle_revenue",
            "instant_regret",
            "cum_regret",
        ):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"trace field {name} length mismatch")

    @property
    def horizon(self) -> int:
        return self.t.shape[0]

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


class _TraceBuilder:
    def __init__(self, horizon: int):
        self.t = np.arange(1, horizon + 1, dtype=np.int64)
        self.episode = np.zeros(horizon, dtype=np.int64)
        self.phase = np.empty(horizon, dtype="<U3")
        self.price = np.zeros(horizon)
        self.oracle_price = np.zeros(horizon)
        self.exp_revenue = np.zeros(horizon)
        self.oracle_revenue = np.zeros(horizon)
        self.instant_regret = np.zeros(horizon)
        self.cum_regret = np.zeros(horizon)
        self._i = 0
        self._cum = 0.0

    def record(self, k: int, tag: str, price: float, sol, revenue: float):
        i = self._i
        self.episode[i] = k
        self.phase[i] = tag
        self.price[i] = price
        self.oracle_price[i] = sol.price
        self.exp_revenue[i] = revenue
        self.oracle_revenue[i] = sol.revenue
        instant = sol.revenue - revenue
        self.instant_regret[i] = instant
        self._cum += instant
        self.cum_regret[i] = self._cum
        self._i += 1

    def build(self, counters: dict) -> RegretTrace:
        if self._i != self.t.shape[0]:
            raise RuntimeError("trace not fully populated")
        return RegretTrace(
            self.t,
            self.episode,
            self.phase,
            self.price,
            self.oracle_price,
            self.exp_revenue,
            self.oracle_revenue,
            self.instant_regret,
            self.cum_regret,
            counters=counters,
        )


def _run_episodic(
    env: MarketEnvironment,
    schedule: EpisodeSchedule,
    rng: np.random.Generator,
    fit_episode: Optional[Callable],
    counters: dict,
) -> RegretTrace:
    """Shared explore-then-commit loop.

    ``fit_episode(buffer)`` turns one episode's exploration data into a
    pricing callable used for the commitment block. When it is None every
    period explores (the uniform-pricing policy).
    """
    B = env.price_bound
    builder = _TraceBuilder(schedule.horizon)
    for k, n_k, n_exp in schedule.blocks():
        if fit_episode is None:
            n_exp = n_k
        contexts = np.empty((n_exp, env.dimension))
        prices = np.empty(n_exp)
        sales = np.empty(n_exp)
        for j in range(n_exp):
            x = sample_context(rng, env)
            p = explore_price(rng, B)
            eps = float(sample_noise(rng, env.noise))
            sales[j] = realize_demand(env, x, p, eps)
            contexts[j] = x
            prices[j] = p
            builder.record(k, EXPLORE_TAG, p, oracle_price(env, x), expected_revenue(env, x, p))
        if fit_episode is None:
            continue
        buffer = LabeledSample.from_exploration(contexts, prices, sales, B)
        price_fn = fit_episode(buffer)
        for _ in range(n_k - n_exp):
            x = sample_context(rng, env)
            p = price_fn(x)
            float(sample_noise(rng, env.noise))
            builder.record(k, COMMIT_TAG, p, oracle_price(env, x), expected_revenue(env, x, p))
    return builder.build(counters)


def _mean_fitter(buffer: LabeledSample, estimator: str) -> Callable:
    """Prediction closure over the exploration buffer with cached weights."""
    n = buffer.n
    d = buffer.dimension
    cfg = choose_scales(n, d, estimator)
    if estimator == "dnn":
        w = dnn_weights(n, cfg.s)
    else:
        w = cfg.alpha1 * dnn_weights(n, cfg.s1) + cfg.alpha2 * dnn_weights(n, cfg.s2)
    responses = buffer.responses

    def mu_hat(x):
        order = order_by_distance(buffer, x)
        return float(w @ responses[order])

    return mu_hat


def _schedule_from_config(env: MarketEnvironment, config: AlgorithmConfig) -> EpisodeSchedule:
    return EpisodeSchedule(
        config.n0, config.episodes, env.dimension, config.m, config.exploration_rule
    )


def run_algorithm1(
    env: MarketEnvironment, config: AlgorithmConfig, rng: np.random.Generator
) -> RegretTrace:
    """Explore-then-commit with nearest-neighbor mean and kernel CDF fits.

    Each episode fits on its own exploration buffer only: the mean
    estimator is a DNN or TDNN prediction over the buffer, residuals from
    that fit feed the kernel CDF estimate, and commitment prices come
    from the fitted phi inversion.
    """
    schedule = _schedule_from_config(env, config)
    lo, hi = config.working_interval(env.noise)
    counters = _new_counters()
    B = env.price_bound

    def fit_episode(buffer: LabeledSample) -> Callable:
        mu_hat = _mean_fitter(buffer, config.estimator)
        b = bandwidth(buffer.n, config.m, config.bandwidth_c)
        est = fit_cdf(buffer, mu_hat, b, eps_floor=config.eps_floor)
        phi = PhiFunction.from_cdf_estimate(est, lo, hi, counters=counters)
        return lambda x: price_map(phi, mu_hat(x), B)

    return _run_episodic(env, schedule, rng, fit_episode, counters)


def run_oracle_policy(
    env: MarketEnvironment, config: AlgorithmConfig, rng: np.random.Generator
) -> RegretTrace:
    """Price every arrival at the oracle price (zero-regret reference)."""
    schedule = _schedule_from_config(env, config)
    builder = _TraceBuilder(schedule.horizon)
    for k, n_k, _ in schedule.blocks():
        for _ in range(n_k):
            x = sample_context(rng, env)
            float(sample_noise(rng, env.noise))
            sol = oracle_price(env, x)
            builder.record(k, COMMIT_TAG, sol.price, sol, sol.revenue)
    return builder.build(_new_counters())


def run_uniform_policy(
    env: MarketEnvironment, config: AlgorithmConfig, rng: np.random.Generator
) -> RegretTrace:
    """Uniform random pricing in every period (no-skill reference)."""
    schedule = _schedule_from_config(env, config)
    return _run_episodic(env, schedule, rng, None, _new_counters())
