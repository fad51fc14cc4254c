"""Point-process log-likelihoods for cascades without background rate.

The seed event at t=0 is the exogenous immigrant and contributes no
log-intensity term. Parents of event j are the events with a smaller
index, so tied timestamps still see each other (both kernels are finite
at zero delay).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, xlogy

from .borel import MAX_BRANCHING, fit_borel_mle
from .cascades import Cascade, cascade_sizes
from .kernels import (KernelFamily, KernelParams, _log_pdf, grad_log_pdf, kernel_cdf,
                      kernel_log_pdf, kernel_pdf, log_bounds)

log = logging.getLogger(__name__)

# A cascade with no event for this long is treated as finished.
COMPLETION_HORIZON = 30 * 24 * 3600.0

_ROW_CHUNK = 512


@dataclass(frozen=True)
class HawkesParams:
    n_star: float
    kernel: KernelParams
    mu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.n_star < 1.0:
            raise ValueError(f"branching factor must lie in [0, 1), got {self.n_star!r}")
        if self.mu != 0.0:
            raise ValueError("reshare cascades have no background rate; mu must be 0")


def intensity(p: HawkesParams, c: Cascade, t: float) -> float:
    """lambda(t) = mu + n* sum_{t_j < t} g(t - t_j); events at exactly t excluded."""
    if t < 0:
        raise ValueError("intensity is defined for t >= 0")
    past = c.event_times[c.event_times < t]
    if past.size == 0:
        return float(p.mu)
    return float(p.mu + p.n_star * np.sum(kernel_pdf(p.kernel, t - past)))


def event_log_sums(kernel: KernelParams, times: np.ndarray, max_parents: int | None = None) -> np.ndarray:
    """log sum_{z<j} g(t_j - t_z) for j = 1..N-1, by dense row blocks."""
    times = np.asarray(times, dtype=np.float64)
    n = times.size
    if n < 2:
        return np.empty(0)
    out = np.empty(n - 1)
    for start in range(1, n, _ROW_CHUNK):
        stop = min(n, start + _ROW_CHUNK)
        rows = np.arange(start, stop)
        lo = 0 if max_parents is None else max(0, start - max_parents)
        cols = np.arange(lo, stop - 1)
        lag = times[rows, None] - times[None, cols]
        mask = cols[None, :] < rows[:, None]
        if max_parents is not None:
            mask &= cols[None, :] >= rows[:, None] - max_parents
        lp = np.where(mask, kernel_log_pdf(kernel, np.where(mask, lag, 0.0)), -np.inf)
        out[start - 1:stop - 1] = logsumexp(lp, axis=1)
    return out


@dataclass(frozen=True)
class WindowTerms:
    """Parameter-separable pieces of a censored cascade log-likelihood.

    log L = n_offspring * log n* + log_kernel_sum - n* compensator_mass
    """

    n_offspring: int
    log_kernel_sum: float
    compensator_mass: float

    def log_likelihood(self, n_star: float) -> float:
        return float(xlogy(self.n_offspring, n_star) + self.log_kernel_sum
                     - n_star * self.compensator_mass)


def window_terms(kernel: KernelParams, c: Cascade, T: float,
                 max_parents: int | None = None) -> WindowTerms:
    times = c.event_times[c.event_times < T]
    logs = event_log_sums(kernel, times, max_parents)
    mass = float(np.sum(kernel_cdf(kernel, T - times)))
    return WindowTerms(int(times.size - 1), float(np.sum(logs)), mass)


def full_log_likelihood(p: HawkesParams, c: Cascade, T: float,
                        max_parents: int | None = None) -> float:
    """Censored Hawkes log-likelihood of the events strictly before T.

    The compensator is closed form: n* sum_j (1 - tail(T - t_j)).
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    terms = window_terms(p.kernel, c, T, max_parents)
    if terms.n_offspring > 0 and p.n_star == 0.0:
        raise FloatingPointError("zero intensity at an observed event")
    return terms.log_likelihood(p.n_star)


def log_likelihood_n(n_star: float, sizes) -> float:
    """sum_i [(N_i - 1) log n* - N_i n*]; -inf when n* = 0 meets a size > 1."""
    sizes = np.asarray(sizes, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return float(np.sum(xlogy(sizes - 1.0, n_star) - sizes * n_star))


class LagTable:
    """Flattened parent-child delays of a cascade list.

    Lets the per-cascade kernel log-likelihood log f^g(H_i) be evaluated for
    every cascade at once; fitting loops call it hundreds of times.
    Cascades with a single event are kept and score 0.
    """

    def __init__(self, cascades: Sequence[Cascade], max_parents: int | None = None):
        self.n_cascades = len(cascades)
        lags, owner, per_event = [], [], []
        for i, c in enumerate(cascades):
            t = c.event_times
            n = t.size
            if n < 2:
                continue
            j = np.arange(1, n)
            if max_parents is None:
                counts = j
                rows = np.repeat(j, counts)
                starts = np.zeros(n - 1, dtype=np.int64)
            else:
                starts = np.maximum(0, j - max_parents)
                counts = j - starts
                rows = np.repeat(j, counts)
            offsets = np.arange(rows.size) - np.repeat(np.cumsum(counts) - counts, counts)
            cols = np.repeat(starts, counts) + offsets
            lags.append(t[rows] - t[cols])
            per_event.append(counts)
            owner.append(np.full(n - 1, i, dtype=np.int64))
        if lags:
            self.lags = np.concatenate(lags)
            counts = np.concatenate(per_event)
            self.event_owner = np.concatenate(owner)
        else:
            self.lags = np.empty(0)
            counts = np.empty(0, dtype=np.int64)
            self.event_owner = np.empty(0, dtype=np.int64)
        self.event_ptr = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64) if counts.size else counts
        self.lag_event = np.repeat(np.arange(counts.size), counts)
        self.n_events = counts.size

    def per_cascade(self, kernel: KernelParams) -> np.ndarray:
        """log f^g(H_i | kernel) for every cascade."""
        if self.n_events == 0:
            return np.zeros(self.n_cascades)
        lp = _log_pdf(kernel, self.lags)
        m = np.maximum.reduceat(lp, self.event_ptr)
        s = np.add.reduceat(np.exp(lp - m[self.lag_event]), self.event_ptr)
        ev = m + np.log(s)
        return np.bincount(self.event_owner, weights=ev, minlength=self.n_cascades)

    def per_cascade_grad(self, kernel: KernelParams) -> tuple[np.ndarray, np.ndarray]:
        """Values and log-parameter gradients (n_params, n_cascades)."""
        npar = kernel.family.n_params
        if self.n_events == 0:
            return np.zeros(self.n_cascades), np.zeros((npar, self.n_cascades))
        lp = _log_pdf(kernel, self.lags)
        m = np.maximum.reduceat(lp, self.event_ptr)
        e = np.exp(lp - m[self.lag_event])
        s = np.add.reduceat(e, self.event_ptr)
        ev = m + np.log(s)
        w = e / s[self.lag_event]
        g = grad_log_pdf(kernel, self.lags)
        grad = np.empty((npar, self.n_cascades))
        for r in range(npar):
            ge = np.add.reduceat(w * g[r], self.event_ptr)
            grad[r] = np.bincount(self.event_owner, weights=ge, minlength=self.n_cascades)
        return np.bincount(self.event_owner, weights=ev, minlength=self.n_cascades), grad


def log_likelihood_g(kernel: KernelParams, group: Sequence[Cascade],
                     max_parents: int | None = None) -> float:
    """sum over cascades and events j >= 1 of log sum_{z<j} g(t_j - t_z)."""
    return float(np.sum(LagTable(group, max_parents).per_cascade(kernel)))


def default_start(table: LagTable, family) -> KernelParams:
    family = KernelFamily.parse(family)
    if table.n_events == 0:
        scale = 1.0
    else:
        # delay to the closest earlier event is a cheap proxy for the typical delay
        nearest = np.minimum.reduceat(table.lags, table.event_ptr)
        scale = float(np.median(nearest)) or float(np.mean(nearest)) or 1.0
    if family is KernelFamily.EXPONENTIAL:
        return KernelParams.exponential(float(np.clip(1.0 / scale, 1e-5, 1e3)))
    return KernelParams.power_law(1.0, float(np.clip(scale, 1e-5, 1e5)))


def maximize_kernel(table: LagTable, weights: np.ndarray | None, family,
                    start: KernelParams, solver: str = "nelder-mead",
                    max_evals: int = 200) -> tuple[KernelParams, float]:
    """Maximise sum_i w_i log f^g(H_i | kernel) over bounded log-parameters.

    Never returns a point worse than ``start``; this keeps EM monotone
    whatever the inner solver does.
    """
    family = KernelFamily.parse(family)
    w = np.ones(table.n_cascades) if weights is None else np.asarray(weights, dtype=float)
    total = float(np.sum(w)) or 1.0
    bounds = log_bounds(family)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def value(x):
        k = KernelParams.from_log_vector(family, np.clip(x, lo, hi))
        return -float(np.dot(w, table.per_cascade(k))) / total

    def value_grad(x):
        k = KernelParams.from_log_vector(family, np.clip(x, lo, hi))
        v, g = table.per_cascade_grad(k)
        return -float(np.dot(w, v)) / total, -(g @ w) / total

    x0 = np.clip(start.to_log_vector(), lo, hi)
    f0 = value(x0)
    if solver == "nelder-mead":
        simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(x0.size)[r] * np.where(x0[r] + 0.5 > hi[r], -1, 1)
                                    for r in range(x0.size)])
        res = minimize(value, x0, method="Nelder-Mead", bounds=bounds,
                       options={"initial_simplex": simplex, "maxfev": max_evals,
                                "xatol": 1e-9, "fatol": 1e-12})
    elif solver == "lbfgs":
        res = minimize(value_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxfun": max_evals, "ftol": 1e-15, "gtol": 1e-10})
    else:
        raise ValueError(f"unknown solver {solver!r}")
    x = np.clip(res.x, lo, hi)
    fx = value(x)
    if not fx <= f0:
        x, fx = x0, f0
    return KernelParams.from_log_vector(family, x), -fx * total


def fit_kernel_mle(group: Sequence[Cascade], family, solver: str = "nelder-mead",
                   max_evals: int = 400, table: LagTable | None = None) -> KernelParams:
    """argmax of L_g over one kernel family, multi-started over a decade each way."""
    table = LagTable(group) if table is None else table
    base = default_start(table, family)
    best, best_val = None, -np.inf
    for factor in (1.0, 0.1, 10.0):
        start = KernelParams(base.family, base.theta * factor, base.c)
        k, val = maximize_kernel(table, None, family, start, solver, max_evals)
        k, val = maximize_kernel(table, None, family, k, solver, max_evals)
        if val > best_val:
            best, best_val = k, val
    return best


@dataclass
class SeparabilityReport:
    joint_n_star: float
    joint_kernel: KernelParams
    separated_n_star: float
    separated_kernel: KernelParams
    joint_log_likelihood: float
    separated_log_likelihood: float
    kernel_identifiable: bool
    differences: dict = field(default_factory=dict)

    @property
    def max_difference(self) -> float:
        return max(self.differences.values()) if self.differences else 0.0


def _joint_log_likelihood(n_star, kernel, group, horizons):
    return sum(full_log_likelihood(HawkesParams(n_star, kernel), c, T)
               for c, T in zip(group, horizons))


def check_separability(group: Sequence[Cascade], kernel_family,
                       horizon: float = COMPLETION_HORIZON) -> SeparabilityReport:
    """Compare the joint maximiser of the summed censored likelihoods with the
    two-phase (Borel MLE, argmax L_g) solution on complete cascades."""
    family = KernelFamily.parse(kernel_family)
    group = list(group)
    sizes = cascade_sizes(group)
    horizons = [float(c.event_times[-1]) + horizon for c in group]
    n_sep = fit_borel_mle(sizes)
    table = LagTable(group)
    identifiable = table.n_events > 0
    k_sep = fit_kernel_mle(group, family, table=table) if identifiable else default_start(table, family)
    sep_ll = (_joint_log_likelihood(n_sep, k_sep, group, horizons)
              if n_sep > 0 or not identifiable else -np.inf)

    if not identifiable:
        return SeparabilityReport(0.0, k_sep, n_sep, k_sep, 0.0, 0.0, False,
                                  {"n_star": abs(n_sep)})

    bounds = [(-20.0, 20.0)] + log_bounds(family)

    def neg(x):
        n_star = min(1.0 / (1.0 + np.exp(-x[0])), MAX_BRANCHING)
        kern = KernelParams.from_log_vector(family, x[1:])
        return -_joint_log_likelihood(n_star, kern, group, horizons)

    # joint search from a neutral point, independent of the separated answer
    x0 = np.concatenate([[0.0], default_start(table, family).to_log_vector()])
    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(x0.size)[r] for r in range(x0.size)])
    res = minimize(neg, x0, method="Nelder-Mead", bounds=bounds,
                   options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-12,
                            "maxfev": 4000})
    n_joint = float(1.0 / (1.0 + np.exp(-res.x[0])))
    k_joint = KernelParams.from_log_vector(family, res.x[1:])
    diffs = {"n_star": abs(n_joint - n_sep), "theta": abs(k_joint.theta - k_sep.theta)}
    if family is KernelFamily.POWER_LAW:
        diffs["c"] = abs(k_joint.c - k_sep.c)
    return SeparabilityReport(n_joint, k_joint, n_sep, k_sep, -float(res.fun), sep_ll,
                              True, diffs)
