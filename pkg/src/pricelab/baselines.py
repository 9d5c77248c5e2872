"""Parametric comparison policies sharing the episodic pricing loop.

Both baselines fit the mean utility by ordinary least squares on the
exploration buffer. The first keeps the kernel CDF estimate for the
noise; the second assumes Gaussian noise and fits its standard
deviation by profile likelihood on the sale indicators.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, solve
from scipy.special import log_ndtr

from .market import MarketEnvironment, _golden_max
from .neighbors import LabeledSample
from .noisecdf import bandwidth, fit_cdf
from .policy import (
    AlgorithmConfig,
    PhiFunction,
    RegretTrace,
    _new_counters,
    _run_episodic,
    _schedule_from_config,
    price_map,
)

__all__ = [
    "LinearFit",
    "GaussianNoiseModel",
    "fit_linear",
    "fit_gaussian_sigma",
    "gaussian_log_likelihood",
    "linear_kernel_policy",
    "rmlp2_policy",
]

_RIDGE = 1e-8
_SIGMA_GRID = np.exp(np.linspace(math.log(0.05), math.log(5.0), 64))


@dataclass(frozen=True, eq=False)
class LinearFit:
    """Least-squares fit of responses on contexts, with intercept."""

    coef: np.ndarray
    intercept: float

    def predict(self, x):
        out = np.asarray(x, dtype=float) @ self.coef + self.intercept
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianNoiseModel:
    """Gaussian noise hypothesis: standard deviation and a degeneracy flag."""

    sigma: float
    degenerate: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def fit_linear(sample: LabeledSample) -> LinearFit:
    """OLS with intercept by normal equations; tiny ridge on singularity."""
    n, d = sample.contexts.shape
    if n < d + 2:
        raise ValueError(f"need at least {d + 2} points to fit {d} slopes")
    A = np.column_stack([sample.contexts, np.ones(n)])
    gram = A.T @ A
    moment = A.T @ sample.responses
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            theta = solve(gram, moment, assume_a="pos")
        if not np.all(np.isfinite(theta)):
            raise LinAlgError("non-finite solution")
    except (LinAlgError, LinAlgWarning):
        theta = solve(gram + _RIDGE * np.eye(d + 1), moment, assume_a="pos")
    return LinearFit(theta[:-1], float(theta[-1]))


def gaussian_log_likelihood(residuals, y, sigma: float) -> float:
    """Bernoulli log-likelihood of sales with Gaussian noise scale sigma."""
    u = np.asarray(residuals, dtype=float) / sigma
    y = np.asarray(y, dtype=float)
    # P(sale) = 1 - Phi(residual / sigma)
    return float(y @ log_ndtr(-u) + (1.0 - y) @ log_ndtr(u))


def fit_gaussian_sigma(sample: LabeledSample, fit: LinearFit) -> GaussianNoiseModel:
    """Profile-likelihood sigma on a log grid with golden-section refinement.

    If the sales carry no information (all identical), returns the grid
    midpoint with the degenerate flag set.
    """
    n, d = sample.contexts.shape
    if n < d + 2:
        raise ValueError(f"need at least {d + 2} points to fit the noise scale")
    y = sample.sales
    if np.all(y == y[0]):
        return GaussianNoiseModel(float(np.exp(np.mean(np.log(_SIGMA_GRID)))), True)
    resid = sample.prices - fit.predict(sample.contexts)

    def ll(sigma):
        return gaussian_log_likelihood(resid, y, sigma)

    values = np.array([ll(s) for s in _SIGMA_GRID])
    i = int(np.argmax(values))
    lo = _SIGMA_GRID[max(i - 1, 0)]
    hi = _SIGMA_GRID[min(i + 1, _SIGMA_GRID.size - 1)]
    sigma = _golden_max(ll, lo, hi, tol=1e-10)
    if ll(sigma) < values[i]:
        sigma = _SIGMA_GRID[i]
    return GaussianNoiseModel(float(sigma))


def linear_kernel_policy(
    env: MarketEnvironment, config: AlgorithmConfig, rng: np.random.Generator
) -> RegretTrace:
    """Linear mean utility fit, kernel noise CDF, same pricing machinery."""
    schedule = _schedule_from_config(env, config)
    lo, hi = config.working_interval(env.noise)
    counters = _new_counters()
    B = env.price_bound

    def fit_episode(buffer: LabeledSample):
        fit = fit_linear(buffer)
        b = bandwidth(buffer.n, config.m, config.bandwidth_c)
        est = fit_cdf(buffer, fit.predict, b, eps_floor=config.eps_floor)
        phi = PhiFunction.from_cdf_estimate(est, lo, hi, counters=counters)
        return lambda x: price_map(phi, float(fit.predict(x)), B)

    return _run_episodic(env, schedule, rng, fit_episode, counters)


def rmlp2_policy(
    env: MarketEnvironment, config: AlgorithmConfig, rng: np.random.Generator
) -> RegretTrace:
    """Linear mean utility fit with a fitted Gaussian noise model."""
    schedule = _schedule_from_config(env, config)
    counters = _new_counters()
    counters["degenerate_sigma"] = 0
    B = env.price_bound

    def fit_episode(buffer: LabeledSample):
        fit = fit_linear(buffer)
        model = fit_gaussian_sigma(buffer, fit)
        if model.degenerate:
            counters["degenerate_sigma"] += 1
        phi = PhiFunction.from_gaussian(
            model.sigma, eps_floor=config.eps_floor, counters=counters
        )
        return lambda x: price_map(phi, float(fit.predict(x)), B)

    return _run_episodic(env, schedule, rng, fit_episode, counters)
