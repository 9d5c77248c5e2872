"""Optional compiled kernels for the numeric hot paths.

Two operations dominate runtime: Nadaraya-Watson component sums over
exploration residuals (called once per Newton iterate while pricing) and
distance ordering of the training contexts (called once per prediction).
Both have a compiled implementation and a pure-numpy twin with identical
semantics. Compilation is skipped when numba is unavailable or when the
environment variable ``PRICELAB_DISABLE_NUMBA`` is set to 1/true/yes.

The compiled Nadaraya-Watson path hardcodes the built-in smoothing
kernel (support [-1/2, 1/2]); estimators built on other kernels use a
generic vectorized path instead.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

__all__ = [
    "HAS_NUMBA",
    "NUMBA_ENABLED",
    "nn_order",
    "nn_order_numpy",
    "nn_order_njit",
    "nw_sums",
    "nw_sums_numpy",
    "nw_sums_njit",
]


def _flag_disabled() -> bool:
    return os.environ.get("PRICELAB_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
    )


NUMBA_ENABLED = HAS_NUMBA and not _flag_disabled()


def nn_order_numpy(contexts: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Indices of ``contexts`` rows by increasing Euclidean distance to ``query``.

    Ties are broken by the original row index (stable sort).
    """
    diff = contexts - query
    d2 = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(d2, kind="mergesort")


def nw_sums_numpy(resid, y, z, b):
    """Nadaraya-Watson component sums at a single point ``z``.

    Uses the built-in smoothing kernel K(u) = (1 - 11/3 u^2)(1 - u^2)^3
    on |u| <= 1/2. Returns ``(a, xi, da, dxi)``::

        a   = (n b)^-1 sum K((r_t - z) / b) y_t
        xi  = (n b)^-1 sum K((r_t - z) / b)
        da  = -(n b^2)^-1 sum K'((r_t - z) / b) y_t
        dxi = -(n b^2)^-1 sum K'((r_t - z) / b)
    """
    n = resid.size
    u = (resid - z) / b
    inside = np.abs(u) <= 0.5
    u = np.where(inside, u, 0.0)
    u2 = u * u
    q = 1.0 - u2
    w = np.where(inside, (1.0 - 11.0 / 3.0 * u2) * q * q * q, 0.0)
    dw = np.where(inside, (8.0 * u / 3.0) * q * q * (11.0 * u2 - 5.0), 0.0)
    a = (w @ y) / (n * b)
    xi = w.sum() / (n * b)
    da = -(dw @ y) / (n * b * b)
    dxi = -dw.sum() / (n * b * b)
    return a, xi, da, dxi


if HAS_NUMBA:

    @njit(cache=True)
    def nn_order_njit(contexts, query):  # pragma: no cover - exercised via alias
        n, d = contexts.shape
        d2 = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = contexts[i, j] - query[j]
                acc += diff * diff
            d2[i] = acc
        return np.argsort(d2, kind="mergesort")

    @njit(cache=True)
    def nw_sums_njit(resid, y, z, b):  # pragma: no cover - exercised via alias
        n = resid.size
        sw = 0.0
        swy = 0.0
        sd = 0.0
        sdy = 0.0
        for t in range(n):
            u = (resid[t] - z) / b
            if u < -0.5 or u > 0.5:
                continue
            u2 = u * u
            q = 1.0 - u2
            w = (1.0 - 11.0 / 3.0 * u2) * q * q * q
            dw = (8.0 * u / 3.0) * q * q * (11.0 * u2 - 5.0)
            sw += w
            sd += dw
            yt = y[t]
            if yt != 0.0:
                swy += w * yt
                sdy += dw * yt
        a = swy / (n * b)
        xi = sw / (n * b)
        da = -sdy / (n * b * b)
        dxi = -sd / (n * b * b)
        return a, xi, da, dxi

else:  # pragma: no cover
    nn_order_njit = None
    nw_sums_njit = None


if NUMBA_ENABLED:
    nn_order = nn_order_njit
    nw_sums = nw_sums_njit
else:  # pragma: no cover - exercised in the fallback test run
    nn_order = nn_order_numpy
    nw_sums = nw_sums_numpy
