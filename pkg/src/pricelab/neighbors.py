"""Distributional nearest-neighbor regression, one- and two-scale.

The one-scale estimator is an L-statistic: order the training points by
distance to the query, then average their responses under exact binomial
weights. It equals the average of the 1-NN estimator over all size-s
subsamples; a brute-force enumeration of that average is included as a
test oracle. The two-scale variant combines two subsampling scales with
coefficients chosen to cancel the leading bias term.
"""

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel

__all__ = [
    "LabeledSample",
    "DnnConfig",
    "TdnnConfig",
    "tdnn_config",
    "order_by_distance",
    "dnn_weights",
    "dnn_predict",
    "dnn_predict_ustat",
    "tdnn_coefficients",
    "tdnn_predict",
    "choose_scales",
]

_USTAT_MAX_N = 20


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Training data: contexts with responses, optionally prices and sales.

    Exploration data carries posted prices and binary sale indicators
    with responses equal to price_bound * sale; synthetic regression
    fixtures may supply responses alone.
    """

    contexts: np.ndarray
    responses: np.ndarray
    prices: Optional[np.ndarray] = None
    sales: Optional[np.ndarray] = None

    def __post_init__(self):
        contexts = np.atleast_2d(np.asarray(self.contexts, dtype=float))
        responses = np.asarray(self.responses, dtype=float).ravel()
        n = contexts.shape[0]
        if n < 1:
            raise ValueError("sample must contain at least one point")
        if responses.shape != (n,):
            raise ValueError("responses length must match number of contexts")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "responses", responses)
        for name in ("prices", "sales"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float).ravel()
            if arr.shape != (n,):
                raise ValueError(f"{name} length must match number of contexts")
            object.__setattr__(self, name, arr)
        if self.sales is not None and not np.all(np.isin(self.sales, (0.0, 1.0))):
            raise ValueError("sales must be binary indicators")

    @property
    def n(self) -> int:
        return self.contexts.shape[0]

    @property
    def dimension(self) -> int:
        return self.contexts.shape[1]

    @classmethod
    def from_exploration(cls, contexts, prices, sales, price_bound: float):
        """Build exploration data with responses price_bound * sale."""
        sales = np.asarray(sales, dtype=float).ravel()
        return cls(contexts, price_bound * sales, prices=prices, sales=sales)


@dataclass(frozen=True)
class DnnConfig:
    """One-scale configuration: subsampling scale s."""

    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("subsampling scale must be at least 1")


@dataclass(frozen=True)
class TdnnConfig:
    """Two-scale configuration: s1 < s2 with bias-cancelling coefficients."""

    s1: int
    s2: int
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not 1 <= self.s1 < self.s2:
            raise ValueError("scales must satisfy 1 <= s1 < s2")
        if abs(self.alpha1 + self.alpha2 - 1.0) > 1e-12:
            raise ValueError("coefficients must sum to 1")


def tdnn_config(s1: int, s2: int, dimension: int) -> TdnnConfig:
    """Two-scale configuration with coefficients derived for ``dimension``."""
    a1, a2 = tdnn_coefficients(s1, s2, dimension)
    return TdnnConfig(s1, s2, a1, a2)


def _check_query(sample: LabeledSample, query) -> np.ndarray:
    query = np.asarray(query, dtype=float).ravel()
    if query.size != sample.dimension:
        raise ValueError(
            f"query has length {query.size}, sample contexts have length "
            f"{sample.dimension}"
        )
    return query


def order_by_distance(sample: LabeledSample, query) -> np.ndarray:
    """Indices sorted by ascending distance to ``query``; ties keep natural order."""
    query = _check_query(sample, query)
    return _accel.nn_order(sample.contexts, query)


def dnn_weights(n: int, s: int) -> np.ndarray:
    """Exact rank weights C(n-i, s-1)/C(n, s), zero beyond rank n-s+1.

    Computed by the multiplicative recurrence w_1 = s/n,
    w_{i+1} = w_i (n-i-s+1)/(n-i), which stays in range for any n.
    """
    if not 1 <= s <= n:
        raise ValueError(f"scale s={s} out of range for sample size n={n}")
    w = np.zeros(n)
    w[0] = s / n
    for i in range(1, n - s + 1):
        w[i] = w[i - 1] * (n - i - s + 1) / (n - i)
    return w


def dnn_predict(sample: LabeledSample, query, config: DnnConfig) -> float:
    """Weighted response average under the rank weights for scale config.s."""
    order = order_by_distance(sample, query)
    w = dnn_weights(sample.n, config.s)
    return float(w @ sample.responses[order])


def dnn_predict_ustat(sample: LabeledSample, query, s: int) -> float:
    """Brute-force oracle: average 1-NN response over all size-s subsamples."""
    n = sample.n
    if n > _USTAT_MAX_N:
        raise ValueError(f"enumeration oracle limited to n <= {_USTAT_MAX_N}")
    if not 1 <= s <= n:
        raise ValueError(f"scale s={s} out of range for sample size n={n}")
    query = _check_query(sample, query)
    diff = sample.contexts - query
    d2 = np.einsum("ij,ij->i", diff, diff)
    total = 0.0
    count = 0
    for subset in itertools.combinations(range(n), s):
        nearest = min(subset, key=lambda i: (d2[i], i))
        total += sample.responses[nearest]
        count += 1
    return total / count


def tdnn_coefficients(s1: int, s2: int, dimension: int):
    """Coefficients (alpha1, alpha2) cancelling the s^(-2/d) bias term."""
    if s1 < 1 or s2 < 1:
        raise ValueError("scales must be at least 1")
    if s1 == s2:
        raise ValueError("scales must differ")
    r = (s1 / s2) ** (-2.0 / dimension)
    a1 = 1.0 / (1.0 - r)
    return a1, 1.0 - a1


def tdnn_predict(sample: LabeledSample, query, config: TdnnConfig) -> float:
    """Two-scale prediction via one ordering and combined rank weights."""
    if config.s2 > sample.n:
        raise ValueError(
            f"scale s2={config.s2} out of range for sample size n={sample.n}"
        )
    order = order_by_distance(sample, query)
    w = config.alpha1 * dnn_weights(sample.n, config.s1)
    w += config.alpha2 * dnn_weights(sample.n, config.s2)
    return float(w @ sample.responses[order])


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def choose_scales(n: int, d: int, kind: str):
    """Subsampling scales from the sample size and context dimension.

    One-scale: s = n^(d/(d+4)). Two-scale: s1 = n^(max(d/(d+8), 1/7)) and
    s2 = 2 s1. Fractional rules are rounded half-up, then clamped so the
    scales stay valid (s <= n; s1 < s2 <= n).
    """
    if n < 2:
        raise ValueError("need at least two points to choose scales")
    if kind == "dnn":
        s = _round_half_up(n ** (d / (d + 4.0)))
        return DnnConfig(min(max(s, 1), n))
    if kind == "tdnn":
        s1 = _round_half_up(n ** max(d / (d + 8.0), 1.0 / 7.0))
        s1 = min(max(s1, 1), n // 2)
        s2 = min(2 * s1, n)
        return tdnn_config(s1, s2, d)
    raise ValueError(f"unknown estimator kind {kind!r}")
