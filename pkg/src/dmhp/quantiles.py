"""Weighted quantiles.

Follows Hmisc ``wtd.quantile`` with ``normwt=FALSE``: the total weight n
plays the role of the sample size, the target position is
``1 + (n - 1) * p``, and the value at a cumulative-weight position is read
with a right-continuous step function. With unit weights this is the
usual linearly interpolated sample quantile (numpy's default).
"""
from __future__ import annotations

import numpy as np


def weighted_quantiles(values, weights, levels) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    levels = np.asarray(levels, dtype=np.float64)
    if values.size == 0:
        raise ValueError("weighted quantiles of an empty sample")
    if values.shape != weights.shape:
        raise ValueError("values and weights differ in length")
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be positive and finite")
    if np.any(levels < 0) or np.any(levels > 1):
        raise ValueError("quantile levels must lie in [0, 1]")

    # identical values are pooled first, as wtd.table does
    x, inverse = np.unique(values, return_inverse=True)
    w = np.bincount(inverse, weights=weights)
    cum = np.cumsum(w)
    n = cum[-1]

    order = 1.0 + (n - 1.0) * levels
    low = np.maximum(np.floor(order), 1.0)
    high = np.minimum(low + 1.0, n)
    frac = order - low

    def step(pos):
        idx = np.searchsorted(cum, pos, side="left")
        return x[np.minimum(idx, x.size - 1)]

    q_low, q_high = step(low), step(high)
    out = (1.0 - frac) * q_low + frac * q_high
    # frac is negative when n < 1; the step value at ``low`` is then exact
    out = np.where(frac < 0, q_low, out)
    return out
