"""Kernel estimation of the noise CDF and its derivative from exploration data.

Given exploration-phase data and a fitted mean-utility estimator, form
residuals z_t = p_t - mu_hat(x_t) and apply Nadaraya-Watson smoothing to
the sale indicators: a(z) and xi(z) are the kernel-weighted indicator
and count averages, the CDF estimate is 1 - a/xi, and its derivative
comes from the kernel-derivative sums via the quotient rule. Every
output is a ratio of kernel sums, so the kernel's normalization cancels.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _accel
from .neighbors import LabeledSample

__all__ = [
    "KernelSpec",
    "CdfEstimate",
    "OutOfWindowError",
    "smoothing_kernel",
    "scale_kernel",
    "kernel_eval",
    "kernel_deriv",
    "bandwidth",
    "nw_components",
    "fit_cdf",
    "cdf_estimate",
    "cdf_deriv_estimate",
    "cdf_deriv_floored",
]

DEFAULT_EPS_FLOOR = 1e-3

_ACCEL_NONE = 0
_ACCEL_BUILTIN = 1


class OutOfWindowError(ValueError):
    """Raised when a raw estimate is requested where no data falls in the window."""


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Smoothing kernel: formula, analytic derivative, support half-width.

    ``fn`` and ``deriv`` are vectorized and must vanish outside
    [-half_width, half_width]. ``accel_id`` tags kernels with a compiled
    fast path; user-supplied formulas use the generic path.
    """

    name: str
    half_width: float
    fn: Callable
    deriv: Callable
    accel_id: int = _ACCEL_NONE

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("kernel support half-width must be positive")


def smoothing_kernel() -> KernelSpec:
    """Built-in kernel K(u) = (1 - 11/3 u^2)(1 - u^2)^3 on |u| <= 1/2."""

    def fn(u):
        u = np.asarray(u, dtype=float)
        u2 = u * u
        q = 1.0 - u2
        return np.where(np.abs(u) <= 0.5, (1.0 - 11.0 / 3.0 * u2) * q * q * q, 0.0)

    def deriv(u):
        u = np.asarray(u, dtype=float)
        u2 = u * u
        q = 1.0 - u2
        return np.where(
            np.abs(u) <= 0.5, (8.0 * u / 3.0) * q * q * (11.0 * u2 - 5.0), 0.0
        )

    return KernelSpec("sim_kernel", 0.5, fn, deriv, accel_id=_ACCEL_BUILTIN)


def scale_kernel(spec: KernelSpec, c: float) -> KernelSpec:
    """The kernel c*K; estimates built on it must match those built on K."""
    if c <= 0:
        raise ValueError("kernel scale factor must be positive")
    return KernelSpec(
        f"{spec.name}*{c:g}",
        spec.half_width,
        lambda u: c * spec.fn(u),
        lambda u: c * spec.deriv(u),
        accel_id=_ACCEL_NONE,
    )


def kernel_eval(spec: KernelSpec, u):
    """Kernel value, zero outside the support."""
    out = spec.fn(np.asarray(u, dtype=float))
    return float(out) if out.ndim == 0 else out


def kernel_deriv(spec: KernelSpec, u):
    """Analytic kernel derivative, zero outside the support."""
    out = spec.deriv(np.asarray(u, dtype=float))
    return float(out) if out.ndim == 0 else out


def bandwidth(n_exp: int, m: int, c: float = 6.0) -> float:
    """Smoothing bandwidth c * n_exp^(-1/(2m+1))."""
    if n_exp < 1:
        raise ValueError("n_exp must be at least 1")
    if m < 2:
        raise ValueError("smoothness order m must be at least 2")
    if c <= 0:
        raise ValueError("bandwidth constant must be positive")
    return c * n_exp ** (-1.0 / (2 * m + 1))


@dataclass(frozen=True, eq=False)
class CdfEstimate:
    """Fitted Nadaraya-Watson CDF estimator over exploration residuals."""

    residuals: np.ndarray
    y: np.ndarray
    b: float
    kernel: KernelSpec
    eps_floor: float = DEFAULT_EPS_FLOOR

    def __post_init__(self):
        residuals = np.asarray(self.residuals, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if residuals.shape != y.shape:
            raise ValueError("residual and indicator arrays must share length")
        if residuals.size < 1:
            raise ValueError("estimator needs at least one data point")
        if self.b <= 0:
            raise ValueError("bandwidth must be positive")
        if self.eps_floor <= 0:
            raise ValueError("derivative floor must be positive")
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "y", y)


def _residuals(data: LabeledSample, mu_hat: Callable) -> np.ndarray:
    if data.prices is None or data.sales is None:
        raise ValueError("CDF estimation needs exploration data with prices and sales")
    resid = np.empty(data.n)
    for i in range(data.n):
        resid[i] = data.prices[i] - float(mu_hat(data.contexts[i]))
    return resid


def fit_cdf(
    data: LabeledSample,
    mu_hat: Callable,
    b: float,
    kernel: KernelSpec = None,
    eps_floor: float = DEFAULT_EPS_FLOOR,
) -> CdfEstimate:
    """Fit the estimator: residuals from ``mu_hat``, indicators from the data."""
    kernel = smoothing_kernel() if kernel is None else kernel
    return CdfEstimate(_residuals(data, mu_hat), data.sales, b, kernel, eps_floor)


def _sums(est: CdfEstimate, z: float):
    """The four component sums (a, xi, da, dxi) at a scalar point z."""
    if est.kernel.accel_id == _ACCEL_BUILTIN:
        return _accel.nw_sums(est.residuals, est.y, z, est.b)
    n = est.residuals.size
    b = est.b
    u = (est.residuals - z) / b
    w = est.kernel.fn(u)
    dw = est.kernel.deriv(u)
    a = (w @ est.y) / (n * b)
    xi = w.sum() / (n * b)
    da = -(dw @ est.y) / (n * b * b)
    dxi = -dw.sum() / (n * b * b)
    return a, xi, da, dxi


def nw_components(data: LabeledSample, mu_hat: Callable, z: float, b: float, kernel: KernelSpec = None):
    """Component averages (a, xi) at ``z`` for data and a mean estimator."""
    est = fit_cdf(data, mu_hat, b, kernel)
    a, xi, _, _ = _sums(est, float(z))
    return a, xi


def _boundary_value(est: CdfEstimate, z: float) -> float:
    # No data in the window: extend by the residual order statistics,
    # 0 below them all, 1 above them all, empirical fraction in a gap.
    return float(np.mean(est.residuals <= z))


def fused_evaluator(est: CdfEstimate) -> Callable:
    """Scalar z -> (F(z), floored F'(z)) in one pass over the data."""
    eps = est.eps_floor
    if est.kernel.accel_id == _ACCEL_BUILTIN:
        nw, resid, yv, b = _accel.nw_sums, est.residuals, est.y, est.b

        def fused(z):
            a, xi, da, dxi = nw(resid, yv, z, b)
            if xi == 0.0:
                return _boundary_value(est, z), eps
            f = 1.0 - a / xi
            if f < 0.0:
                f = 0.0
            elif f > 1.0:
                f = 1.0
            f1 = -(da * xi - a * dxi) / (xi * xi)
            return f, (f1 if f1 > eps else eps)

        return fused

    def fused_generic(z):
        a, xi, da, dxi = _sums(est, z)
        if xi == 0.0:
            return _boundary_value(est, z), eps
        f = min(max(1.0 - a / xi, 0.0), 1.0)
        f1 = max(-(da * xi - a * dxi) / (xi * xi), eps)
        return f, f1

    return fused_generic


def _cdf_scalar(est: CdfEstimate, z: float) -> float:
    a, xi, _, _ = _sums(est, z)
    if xi == 0.0:
        return _boundary_value(est, z)
    return min(max(1.0 - a / xi, 0.0), 1.0)


def cdf_estimate(est: CdfEstimate, z):
    """Estimated CDF 1 - a/xi, clamped to [0, 1], with boundary extension."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return _cdf_scalar(est, float(z))
    return np.array([_cdf_scalar(est, zi) for zi in z.ravel()]).reshape(z.shape)


def _deriv_scalar_raw(est: CdfEstimate, z: float) -> float:
    a, xi, da, dxi = _sums(est, z)
    if xi == 0.0:
        raise OutOfWindowError(f"no data within the kernel window at z={z!r}")
    return -(da * xi - a * dxi) / (xi * xi)


def cdf_deriv_estimate(est: CdfEstimate, z):
    """Raw derivative estimate -(a' xi - a xi')/xi^2 (unfloored)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return _deriv_scalar_raw(est, float(z))
    return np.array([_deriv_scalar_raw(est, zi) for zi in z.ravel()]).reshape(z.shape)


def cdf_deriv_floored(est: CdfEstimate, z):
    """Derivative floored at eps_floor; out-of-window points get the floor."""
    z = np.asarray(z, dtype=float)

    def one(zi):
        try:
            return max(_deriv_scalar_raw(est, zi), est.eps_floor)
        except OutOfWindowError:
            return est.eps_floor

    if z.ndim == 0:
        return one(float(z))
    return np.array([one(zi) for zi in z.ravel()]).reshape(z.shape)
