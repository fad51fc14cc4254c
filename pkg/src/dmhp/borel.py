"""Borel and Borel-Tanner total-progeny laws.

Everything is in log space via ``gammaln``; k! overflows doubles near
k = 171 and real cascades are far longer than that.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln, xlogy

# n* is kept strictly subcritical; moments and Eq.-style predictions divide by 1 - n*.
MAX_BRANCHING = 1.0 - 1e-9


def _check_branching(n_star):
    n = np.asarray(n_star, dtype=np.float64)
    if np.any(n < 0) or np.any(n >= 1) or np.any(np.isnan(n)):
        raise ValueError(f"branching factor must lie in [0, 1), got {n_star!r}")
    return n


def _scalar_or_array(out, *likes):
    if all(np.ndim(x) == 0 for x in likes):
        return float(out)
    return out


def borel_log_pmf(n_star, k):
    """log P[N = k] for the total progeny of a Poisson(n*) Galton-Watson tree.

    n* = 0 gives log 1 at k = 1 and -inf elsewhere.
    """
    n = _check_branching(n_star)
    kk = np.asarray(k, dtype=np.float64)
    if np.any(kk < 1) or np.any(kk != np.floor(kk)):
        raise ValueError("Borel support is the positive integers")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(kk - 1.0, kk * n) - kk * n - gammaln(kk + 1.0)
    return _scalar_or_array(out, n_star, k)


def borel_pmf(n_star, k):
    return _scalar_or_array(np.exp(borel_log_pmf(n_star, k)), n_star, k)


def borel_mean_var(n_star) -> tuple[float, float]:
    n = float(_check_branching(n_star))
    return 1.0 / (1.0 - n), n / (1.0 - n) ** 3


def borel_tanner_log_pmf(n_star, n_initial, k):
    """log P[total progeny = k | N^d = n_initial initial events].

    The total counts the initial events themselves. ``n_initial = 0`` is
    the empty tree: mass 1 at k = 0.
    """
    n = _check_branching(n_star)
    d = np.asarray(n_initial, dtype=np.float64)
    kk = np.asarray(k, dtype=np.float64)
    if np.any(d < 0) or np.any(d != np.floor(d)):
        raise ValueError("number of initial events must be a non-negative integer")
    if np.any(kk < 0) or np.any(kk != np.floor(kk)):
        raise ValueError("progeny size must be a non-negative integer")
    n, d, kk = np.broadcast_arrays(n, d, kk)
    # sizes below the number of initial events have no mass
    out = np.full(kk.shape, -np.inf)
    empty = d == 0
    out[empty & (kk == 0)] = 0.0
    live = ~empty & (kk >= d)
    if np.any(live):
        nl, dl, kl = n[live], d[live], kk[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[live] = (np.log(dl) + xlogy(kl - dl, kl * nl) - kl * nl
                         - np.log(kl) - gammaln(kl - dl + 1.0))
    return _scalar_or_array(out, n_star, n_initial, k)


def borel_tanner_pmf(n_star, n_initial, k):
    return _scalar_or_array(np.exp(borel_tanner_log_pmf(n_star, n_initial, k)),
                            n_star, n_initial, k)


def borel_tanner_mean_var(n_star, n_initial) -> tuple[float, float]:
    n = float(_check_branching(n_star))
    d = float(n_initial)
    if d < 0:
        raise ValueError("number of initial events must be non-negative")
    return d / (1.0 - n), d * n / (1.0 - n) ** 3


def fit_borel_mle(sizes, counts=None) -> float:
    """Closed-form maximiser of sum_i [(N_i - 1) log n* - N_i n*].

    ``counts`` optionally gives multiplicities for ``sizes``.
    """
    sizes = np.asarray(sizes, dtype=np.float64).reshape(-1)
    if sizes.size == 0:
        raise ValueError("need at least one cascade size")
    if np.any(sizes < 1):
        raise ValueError("cascade sizes must be >= 1")
    w = np.ones_like(sizes) if counts is None else np.asarray(counts, dtype=np.float64)
    n_hat = np.dot(w, sizes - 1.0) / np.dot(w, sizes)
    return float(np.clip(n_hat, 0.0, MAX_BRANCHING))
