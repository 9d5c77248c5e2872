"""Synthetic market environments for contextual pricing.

A market draws i.i.d. context vectors, maps them to a mean utility,
adds bounded zero-mean noise to form the buyer's valuation, and sells
one unit whenever the valuation meets the posted price. Everything the
simulator treats as ground truth lives here: the noise law with its
exact CDF, expected revenue under the true law, and the oracle price.

All randomness flows through numpy Generators supplied by the caller;
environments are immutable after construction and safe to share.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, simpson

__all__ = [
    "NoiseSpec",
    "MarketEnvironment",
    "OracleSolution",
    "quartic_noise",
    "octic_noise",
    "custom_noise",
    "quadratic_sim_env",
    "calibration_env",
    "linear_env",
    "sample_context",
    "mean_utility",
    "sample_noise",
    "noise_cdf_true",
    "realize_demand",
    "expected_revenue",
    "oracle_price",
]

_TABLE_SIZE = 4097
_MEAN_FORMS = ("quadratic_sim", "quadratic_calibration", "linear")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """A bounded, symmetric, zero-mean noise law.

    ``pdf`` and ``cdf`` are vectorized callables valid on the whole real
    line (zero / clamped outside the support [-half_width, half_width]).
    ``table_u``/``table_z`` form a monotone inverse-CDF table used for
    inverse-transform sampling. ``smoothness`` records how many CDF
    derivatives are worth exploiting when smoothing residuals.
    """

    name: str
    half_width: float
    smoothness: int
    pdf: Callable
    cdf: Callable
    table_u: np.ndarray
    table_z: np.ndarray
    cdf_scalar: Optional[Callable] = None

    def __post_init__(self):
        _validate_noise(self)


def _validate_noise(spec: NoiseSpec) -> None:
    if spec.half_width <= 0:
        raise ValueError("noise half_width must be positive")
    z = np.linspace(-spec.half_width, spec.half_width, _TABLE_SIZE)
    dens = np.asarray(spec.pdf(z), dtype=float)
    if np.any(dens < -1e-12):
        raise ValueError(f"noise density {spec.name!r} takes negative values")
    if not np.allclose(dens, dens[::-1], atol=1e-9):
        raise ValueError(f"noise density {spec.name!r} is not symmetric about 0")
    total = simpson(dens, x=z)
    if abs(total - 1.0) > 1e-8:
        raise ValueError(
            f"noise density {spec.name!r} integrates to {total!r}, expected 1"
        )
    if abs(float(spec.cdf(-spec.half_width))) > 1e-9:
        raise ValueError("noise CDF must vanish at the lower support endpoint")
    if abs(float(spec.cdf(spec.half_width)) - 1.0) > 1e-9:
        raise ValueError("noise CDF must reach 1 at the upper support endpoint")
    u = np.asarray(spec.table_u, dtype=float)
    if u.ndim != 1 or u.size < 2 or np.any(np.diff(u) < 0):
        raise ValueError("inverse-CDF table must be monotone nondecreasing")
    if spec.table_z.shape != u.shape:
        raise ValueError("inverse-CDF table grids must have matching length")
    if spec.cdf_scalar is not None:
        probe = np.linspace(-1.5 * spec.half_width, 1.5 * spec.half_width, 257)
        fast = np.array([spec.cdf_scalar(float(v)) for v in probe])
        slow = np.clip(np.asarray(spec.cdf(probe), dtype=float), 0.0, 1.0)
        if not np.allclose(fast, slow, atol=1e-12):
            raise ValueError("scalar CDF path disagrees with the vectorized CDF")


def _build_table(cdf: Callable, half_width: float):
    z = np.linspace(-half_width, half_width, _TABLE_SIZE)
    u = np.clip(np.asarray(cdf(z), dtype=float), 0.0, 1.0)
    u = np.maximum.accumulate(u)
    return u, z


def quartic_noise() -> NoiseSpec:
    """Noise with density 6(1/4 - z^2) on [-1/2, 1/2]."""

    def pdf(z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) <= 0.5, 6.0 * (0.25 - z * z), 0.0)

    def cdf(z):
        z = np.clip(np.asarray(z, dtype=float), -0.5, 0.5)
        return 0.5 + 1.5 * z - 2.0 * z**3

    def cdf_scalar(z):
        if z <= -0.5:
            return 0.0
        if z >= 0.5:
            return 1.0
        return 0.5 + (1.5 - 2.0 * z * z) * z

    u, z = _build_table(cdf, 0.5)
    return NoiseSpec("quartic_sim", 0.5, 2, pdf, cdf, u, z, cdf_scalar)


def octic_noise() -> NoiseSpec:
    """Noise with density (105/256)(1 - (z/3)^2)^4 on [-3, 3]."""

    def pdf(z):
        z = np.asarray(z, dtype=float)
        u = z / 3.0
        return np.where(np.abs(z) <= 3.0, (105.0 / 256.0) * (1.0 - u * u) ** 4, 0.0)

    def _poly(u):
        return u - 4.0 * u**3 / 3.0 + 6.0 * u**5 / 5.0 - 4.0 * u**7 / 7.0 + u**9 / 9.0

    def cdf(z):
        u = np.clip(np.asarray(z, dtype=float) / 3.0, -1.0, 1.0)
        return (315.0 / 256.0) * (_poly(u) + 128.0 / 315.0)

    def cdf_scalar(z):
        if z <= -3.0:
            return 0.0
        if z >= 3.0:
            return 1.0
        u = z / 3.0
        return (315.0 / 256.0) * (_poly(u) + 128.0 / 315.0)

    u, z = _build_table(cdf, 3.0)
    return NoiseSpec("octic_calibration", 3.0, 4, pdf, cdf, u, z, cdf_scalar)


def custom_noise(name: str, density: Callable, half_width: float,
                 smoothness: int) -> NoiseSpec:
    """NoiseSpec from a (possibly unnormalized) symmetric density callable.

    The normalizing constant comes from adaptive quadrature and the CDF
    from a dense cumulative integral with linear interpolation, pinned to
    exactly 0 and 1 at the support endpoints.
    """
    if half_width <= 0:
        raise ValueError("noise half_width must be positive")
    mass = quad(density, -half_width, half_width,
                epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    if mass <= 0:
        raise ValueError("density must have positive mass")
    grid = np.linspace(-half_width, half_width, 4 * _TABLE_SIZE - 3)
    dens = np.asarray(density(grid), dtype=float) / mass
    cum = cumulative_trapezoid(dens, grid, initial=0.0)
    cum = np.maximum.accumulate(np.clip(cum / cum[-1], 0.0, 1.0))

    def pdf(z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) <= half_width, density(z) / mass, 0.0)

    def cdf(z):
        return np.interp(np.asarray(z, dtype=float), grid, cum)

    u, z = _build_table(cdf, half_width)
    return NoiseSpec(name, half_width, smoothness, pdf, cdf, u, z)


@dataclass(frozen=True, eq=False)
class MarketEnvironment:
    """Ground-truth market: context law, mean utility, noise, price cap.

    ``mean_form`` selects a named functional form: "quadratic_sim" is
    2(x1-1)^2 + 2(x2-1)^2 + 2(x3-1)^2 on dimension 3,
    "quadratic_calibration" is sum(beta_i * x_i^2) and "linear" is
    beta' x, both with user-supplied coefficients. Contexts are
    per-coordinate uniform on
    [context_low, context_high]. ``value_margin`` records the interior
    margin the theory assumes for valuations; it is not enforced.
    """

    dimension: int
    mean_form: str
    noise: NoiseSpec
    price_bound: float
    beta: Optional[np.ndarray] = None
    context_low: Optional[np.ndarray] = None
    context_high: Optional[np.ndarray] = None
    value_margin: float = 0.0

    def __post_init__(self):
        d = self.dimension
        if d < 1:
            raise ValueError("dimension must be a positive integer")
        if self.mean_form not in _MEAN_FORMS:
            raise ValueError(f"unknown mean utility form {self.mean_form!r}")
        if self.mean_form == "quadratic_sim" and d != 3:
            raise ValueError("quadratic_sim mean utility requires dimension 3")
        if self.mean_form in ("quadratic_calibration", "linear"):
            if self.beta is None:
                raise ValueError(f"{self.mean_form} requires coefficients beta")
            beta = np.asarray(self.beta, dtype=float)
            if beta.shape != (d,):
                raise ValueError("beta length must match dimension")
            object.__setattr__(self, "beta", beta)
        low = self.context_low
        high = self.context_high
        low = np.zeros(d) if low is None else np.broadcast_to(
            np.asarray(low, dtype=float), (d,)
        ).copy()
        high = np.full(d, 2.0) if high is None else np.broadcast_to(
            np.asarray(high, dtype=float), (d,)
        ).copy()
        if np.any(high < low):
            raise ValueError("context bounds must satisfy low <= high")
        object.__setattr__(self, "context_low", low)
        object.__setattr__(self, "context_high", high)
        if self.price_bound <= 0:
            raise ValueError("price_bound must be positive")
        mu_lo, mu_hi = _mean_range(self.mean_form, self.beta, low, high)
        if mu_lo < -1e-9:
            raise ValueError("mean utility must be nonnegative on the context box")
        if mu_hi + self.noise.half_width > self.price_bound + 1e-9:
            raise ValueError(
                "price_bound must upper-bound mean utility plus noise half-width"
            )


def _mean_eval(form: str, beta, X: np.ndarray) -> np.ndarray:
    if form == "quadratic_sim":
        return 2.0 * np.sum((X - 1.0) ** 2, axis=-1)
    if form == "linear":
        return X @ beta
    return (X * X) @ beta


def _mean_range(form: str, beta, low: np.ndarray, high: np.ndarray):
    lo_total = 0.0
    hi_total = 0.0
    if form == "quadratic_sim":
        for lo, hi in zip(low, high):
            cands = [2.0 * (lo - 1.0) ** 2, 2.0 * (hi - 1.0) ** 2]
            if lo <= 1.0 <= hi:
                cands.append(0.0)
            lo_total += min(cands)
            hi_total += max(cands)
    elif form == "linear":
        for coef, lo, hi in zip(beta, low, high):
            vals = (coef * lo, coef * hi)
            lo_total += min(vals)
            hi_total += max(vals)
    else:
        for coef, lo, hi in zip(beta, low, high):
            sq_hi = max(lo * lo, hi * hi)
            sq_lo = 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)
            vals = (coef * sq_lo, coef * sq_hi)
            lo_total += min(vals)
            hi_total += max(vals)
    return lo_total, hi_total


def quadratic_sim_env(price_bound: float = 6.5) -> MarketEnvironment:
    """Dimension-3 environment: quadratic mean utility, quartic noise."""
    return MarketEnvironment(3, "quadratic_sim", quartic_noise(), price_bound)


def calibration_env(beta, price_bound: float = 6.0) -> MarketEnvironment:
    """Calibration-family environment: beta' x^2 mean utility, octic noise."""
    beta = np.asarray(beta, dtype=float)
    return MarketEnvironment(
        beta.size, "quadratic_calibration", octic_noise(), price_bound, beta=beta
    )


def linear_env(beta, price_bound: float = 6.5,
               noise: Optional[NoiseSpec] = None) -> MarketEnvironment:
    """Linear mean utility beta' x, quartic noise unless another is given."""
    beta = np.asarray(beta, dtype=float)
    noise = quartic_noise() if noise is None else noise
    return MarketEnvironment(beta.size, "linear", noise, price_bound, beta=beta)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Optimal price and expected revenue for one context."""

    context: np.ndarray
    price: float
    revenue: float


def sample_context(rng: np.random.Generator, env: MarketEnvironment, size=None):
    """Draw one context vector (or ``size`` rows) from the context law."""
    if size is None:
        return rng.uniform(env.context_low, env.context_high)
    return rng.uniform(env.context_low, env.context_high, (size, env.dimension))


def mean_utility(env: MarketEnvironment, x):
    """Evaluate the mean utility at ``x`` (a vector or stack of vectors)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != env.dimension:
        raise ValueError(
            f"context has length {x.shape[-1]}, environment expects {env.dimension}"
        )
    out = _mean_eval(env.mean_form, env.beta, x)
    return float(out) if out.ndim == 0 else out


def sample_noise(rng: np.random.Generator, spec: NoiseSpec, size=None):
    """Inverse-transform sample from the noise law via the CDF table."""
    u = rng.uniform(0.0, 1.0, size)
    return np.interp(u, spec.table_u, spec.table_z)


def _cdf_scalar(spec: NoiseSpec, z: float) -> float:
    if spec.cdf_scalar is not None:
        return min(max(spec.cdf_scalar(z), 0.0), 1.0)
    return float(np.clip(spec.cdf(z), 0.0, 1.0))


def noise_cdf_true(spec: NoiseSpec, z):
    """Exact noise CDF, clamped to [0, 1]."""
    if np.ndim(z) == 0:
        return _cdf_scalar(spec, float(z))
    return np.clip(spec.cdf(np.asarray(z, dtype=float)), 0.0, 1.0)


def realize_demand(env: MarketEnvironment, x, price: float, eps):
    """1 if the valuation meets the posted price, else 0."""
    value = mean_utility(env, x) + eps
    out = (value >= price).astype(np.int64) if np.ndim(value) else int(value >= price)
    return out


def expected_revenue(env: MarketEnvironment, x, price):
    """price * (1 - F(price - mean utility)) under the true noise CDF."""
    mu = mean_utility(env, x)
    if np.ndim(price) == 0 and np.ndim(mu) == 0:
        price = float(price)
        return price * (1.0 - _cdf_scalar(env.noise, price - mu))
    price = np.asarray(price, dtype=float)
    return price * (1.0 - noise_cdf_true(env.noise, price - mu))


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10):
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def oracle_price(env: MarketEnvironment, x) -> OracleSolution:
    """Maximize expected revenue over [0, B]: coarse grid, then golden section.

    The returned revenue is the better of the refined point and the best
    grid point, so it never falls below the grid maximum.
    """
    x = np.asarray(x, dtype=float)
    mu = mean_utility(env, x)
    B = env.price_bound
    grid = np.linspace(0.0, B, 2001)
    rev = grid * (1.0 - noise_cdf_true(env.noise, grid - mu))
    i = int(np.argmax(rev))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    spec = env.noise

    def f(p):
        return p * (1.0 - _cdf_scalar(spec, p - mu))

    p_star = _golden_max(f, lo, hi)
    r_star = f(p_star)
    if r_star < rev[i]:
        p_star, r_star = float(grid[i]), float(rev[i])
    return OracleSolution(x, float(p_star), float(r_star))
