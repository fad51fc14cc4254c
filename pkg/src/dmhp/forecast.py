"""Forecasting for partially observed and not-yet-started cascades.

Given a cascade observed up to T and one Hawkes parameter set, future
events split into direct offspring of the observed events, a Poisson
count with mean Lambda = n* sum_j tail(T - t_j), and their descendants.
The total future count is a Poisson mixture of Borel-Tanner laws, with
mean Lambda / (1 - n*) and variance Lambda / (1 - n*)^3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy
from scipy.stats import poisson

from .cascades import Cascade, cascade_sizes, count_before, truncate
from .kernels import KernelParams, kernel_tail
from .likelihood import COMPLETION_HORIZON, window_terms
from .mixtures import BMMConfig, BorelMixture, DualMixture, KernelMixture, fit_bmm

DEFAULT_EPS_P = 1e-10
MAX_SUPPORT = 2_000_000


@dataclass(frozen=True)
class PublisherModel:
    borel: BorelMixture
    kernel: KernelMixture
    dual: DualMixture
    avg_cascades_per_item: float
    source_items: tuple[str, ...] = ()

    @classmethod
    def from_dual(cls, dual: DualMixture, avg_cascades_per_item: float,
                  source_items: Sequence[str] = ()) -> "PublisherModel":
        return cls(dual.borel, dual.kernel, dual, float(avg_cascades_per_item), tuple(source_items))


def _pool(components_per_item):
    n = len(components_per_item)
    return tuple((p, w / n) for comps in components_per_item for p, w in comps)


def pool_publisher_model(item_models: Sequence[DualMixture], cascade_counts: Sequence[int],
                         max_items: int = 5, item_ids: Sequence[str] | None = None,
                         refit_cascades: Sequence[Sequence[Cascade]] | None = None,
                         refit_after: float | None = None,
                         bmm_config: BMMConfig = BMMConfig()) -> PublisherModel:
    """Pool the most recent ``max_items`` item models of one publisher.

    Inputs are ordered oldest to newest. Each item's components keep their
    parameters and have their weights divided by the number of pooled items.

    When ``refit_after`` is set, each item's BMM is re-fitted (same k) on the
    final sizes of its historical cascades that still had events at or after
    that time, so the pooled virality reflects cascades that outlive the
    observation window. Items with no such cascade keep their BMM.
    """
    if not item_models:
        raise ValueError("publisher has no item models")
    if len(cascade_counts) != len(item_models):
        raise ValueError("need one cascade count per item model")
    if max_items < 1:
        raise ValueError("max_items must be >= 1")
    ids = list(item_ids) if item_ids is not None else [str(i) for i in range(len(item_models))]
    models = list(item_models)[-max_items:]
    counts = list(cascade_counts)[-max_items:]
    ids = ids[-max_items:]

    borels = [m.borel for m in models]
    if refit_after is not None:
        if refit_cascades is None or len(refit_cascades) != len(item_models):
            raise ValueError("refit needs the historical cascades of every item")
        history = list(refit_cascades)[-max_items:]
        for i, cascades in enumerate(history):
            alive = [c for c in cascades if c.event_times[-1] >= refit_after]
            if alive:
                borels[i], _ = fit_bmm(cascade_sizes(alive), len(borels[i]), bmm_config)

    borel = BorelMixture(_pool([b.components for b in borels]))
    kernel = KernelMixture(_pool([m.kernel.components for m in models]))
    return PublisherModel(borel, kernel, DualMixture(borel, kernel),
                          float(np.mean(counts)), tuple(ids))


def residual_intensity(n_star: float, kernel: KernelParams, c: Cascade, T: float) -> float:
    """Expected number of direct offspring after T: n* sum_{t_j<T} tail(T - t_j)."""
    if math.isinf(T):
        return 0.0
    past = c.event_times[c.event_times < T]
    return float(n_star * np.sum(kernel_tail(kernel, T - past)))


@dataclass
class SizeDistribution:
    """P[N = observed + m] for m = 0, 1, ...; ``pmf[m]``."""

    observed: int
    pmf: np.ndarray
    residual: float
    truncation_bound: float
    poisson_terms: int = 0

    @property
    def support(self) -> np.ndarray:
        return self.observed + np.arange(self.pmf.size)

    @property
    def total_mass(self) -> float:
        return float(self.pmf.sum())

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf) / self.pmf.sum())

    def var(self) -> float:
        m = np.arange(self.pmf.size, dtype=float)
        p = self.pmf / self.pmf.sum()
        mu = np.dot(m, p)
        return float(np.dot((m - mu) ** 2, p))

    def as_dict(self) -> dict[int, float]:
        return {int(n): float(p) for n, p in zip(self.support, self.pmf)}


def _future_count_pmf(n_star: float, lam: float, eps_p: float, max_support: int):
    """Poisson(lam)-mixture of Borel-Tanner laws over the future count m."""
    mode = int(math.floor(lam))
    z = np.arange(0, mode + 1)
    # extend past the mode until the Poisson weight drops below eps_p
    while True:
        top = z[-1]
        if poisson.pmf(top, lam) < eps_p and top >= mode:
            break
        z = np.arange(0, top + max(16, top // 4) + 1)
    while z.size > 1 and poisson.pmf(z[-1], lam) < eps_p:
        z = z[:-1]
    log_poi = xlogy(z, lam) - lam - gammaln(z + 1.0)
    kept_poisson = float(np.exp(logsumexp(log_poi)))
    poisson_tail = float(poisson.sf(z[-1], lam))

    one_minus = 1.0 - n_star
    mean = lam / one_minus
    sd = math.sqrt(lam / one_minus ** 3)
    size = int(min(max_support, math.ceil(mean + 12.0 * sd + 32.0)))
    zz = z[:, None].astype(float)
    while True:
        m = np.arange(size + 1, dtype=float)[None, :]
        valid = m >= zz
        with np.errstate(divide="ignore", invalid="ignore"):
            log_bt = np.where(
                zz > 0,
                np.log(np.maximum(zz, 1.0)) + xlogy(m - zz, m * n_star) - m * n_star
                - np.log(np.maximum(m, 1.0)) - gammaln(np.maximum(m - zz, 0.0) + 1.0),
                np.where(m == 0, 0.0, -np.inf))
        log_bt = np.where(valid, log_bt, -np.inf)
        pmf = np.exp(logsumexp(log_poi[:, None] + log_bt, axis=0))
        shortfall = kept_poisson - float(pmf.sum())
        if shortfall <= 1e-12 or size >= max_support:
            break
        size = min(max_support, size * 2)
    return pmf, poisson_tail + max(shortfall, 0.0), int(z.size)


def posterior_size_pmf(n_star: float, kernel: KernelParams, c: Cascade, T: float,
                       eps_p: float = DEFAULT_EPS_P, max_support: int = MAX_SUPPORT) -> SizeDistribution:
    """Final-size distribution of a cascade observed up to T.

    The Poisson sum over direct-offspring counts z runs past its mode and
    stops once Poi(z) < eps_p. The support in m grows until it holds the
    kept Poisson mass to 1e-12 (or hits ``max_support``). The missing mass
    is reported in ``truncation_bound``.
    """
    if not 0.0 < eps_p < 1.0:
        raise ValueError("eps_p must lie in (0, 1)")
    observed = count_before(c, T)
    lam = residual_intensity(n_star, kernel, c, T)
    if lam == 0.0:
        return SizeDistribution(observed, np.ones(1), 0.0, 0.0, 1)
    pmf, bound, terms = _future_count_pmf(n_star, lam, eps_p, max_support)
    return SizeDistribution(observed, pmf, lam, bound, terms)


def predict_cascade_size(n_star: float, kernel: KernelParams, c: Cascade, T: float) -> float:
    """Posterior mean N(T) + Lambda / (1 - n*)."""
    return count_before(c, T) + residual_intensity(n_star, kernel, c, T) / (1.0 - n_star)


def predict_cascade_variance(n_star: float, kernel: KernelParams, c: Cascade, T: float,
                             eps_p: float = DEFAULT_EPS_P, method: str = "pmf") -> float:
    """Posterior variance of the final size.

    ``method="pmf"`` takes the variance of the truncated posterior PMF, so it
    depends (slightly) on eps_p; ``"closed"`` uses Lambda / (1 - n*)^3.
    """
    if method == "closed":
        return residual_intensity(n_star, kernel, c, T) / (1.0 - n_star) ** 3
    if method != "pmf":
        raise ValueError(f"unknown method {method!r}")
    return posterior_size_pmf(n_star, kernel, c, T, eps_p).var()


@dataclass(frozen=True)
class ItemForecast:
    mean: float
    variance: float
    observed: int


def _horizons(observed, T) -> np.ndarray:
    T = np.broadcast_to(np.asarray(T, dtype=float), (len(observed),))
    if np.any(~(T > 0)):
        raise ValueError("observation horizons must be positive")
    return T


def _tail_sums(kernels, observed, T):
    """sum_j tail(T_i - t_j) per (cascade, kernel)."""
    out = np.zeros((len(observed), len(kernels)))
    for i, (c, Ti) in enumerate(zip(observed, _horizons(observed, T))):
        past = c.event_times[c.event_times < Ti]
        for j, k in enumerate(kernels):
            out[i, j] = np.sum(kernel_tail(k, Ti - past))
    return out


def forecast_item(pm: PublisherModel, observed: Sequence[Cascade], T) -> ItemForecast:
    """Mean and variance of an item's final popularity under the pooled model.

    ``T`` is the observation horizon of each cascade in its own clock: a
    scalar, or one value per cascade when cascades began at different times
    (see ``observe_item``).

    Each dual component contributes C/(1-n*) for cascades yet to start plus
    the posterior mean of every observed cascade; the variance adds the
    between-component spread to the within-component Borel-Tanner and
    compound-Poisson variances.
    """
    n_stars = pm.borel.n_stars
    wb = pm.borel.weights
    kernels = pm.kernel.kernels
    wk = pm.kernel.weights
    n_obs = int(sum(count_before(c, Ti) for c, Ti in zip(observed, _horizons(observed, T))))
    tails = _tail_sums(kernels, observed, T).sum(axis=0) if observed else np.zeros(len(kernels))
    one_minus = (1.0 - n_stars)[:, None]
    lam = n_stars[:, None] * tails[None, :]
    C = pm.avg_cascades_per_item
    mean = C / one_minus + n_obs + lam / one_minus
    var = C * n_stars[:, None] / one_minus ** 3 + lam / one_minus ** 3
    w = wb[:, None] * wk[None, :]
    total_mean = float(np.sum(w * mean))
    total_var = float(np.sum(w * (var + (mean - total_mean) ** 2)))
    return ItemForecast(total_mean, total_var, n_obs)


def observe_item(cascades: Sequence[Cascade], starts, T: float) -> tuple[list[Cascade], np.ndarray]:
    """What is visible of an item at item time ``T``: cascades begun before
    ``T``, each truncated at ``T - start``. Returns (cascades, horizons)."""
    starts = np.broadcast_to(np.asarray(starts, dtype=float), (len(cascades),))
    seen = [(truncate(c, T - s), T - s) for c, s in zip(cascades, starts) if s < T]
    if not seen:
        return [], np.empty(0)
    cs, hs = zip(*seen)
    return list(cs), np.array(hs)


def predict_item_popularity(pm: PublisherModel, observed: Sequence[Cascade], T) -> float:
    """Expected final popularity of an item: E over dual components of
    C/(1-n*) + sum_i [N_i(T) + Lambda_i/(1-n*)]."""
    return forecast_item(pm, observed, T).mean


@dataclass
class HoldoutResult:
    expected_hll: float
    holdout_events: int
    posterior: np.ndarray
    component_hll: np.ndarray
    prior_fallback: bool = False

    @property
    def hll_per_event(self) -> float:
        if self.holdout_events == 0:
            return 0.0
        return self.expected_hll / self.holdout_events

    @property
    def predictive_hll(self) -> float:
        """log sum_k post_k L_k: the holdout log-likelihood of the posterior
        predictive mixture. It is never below ``expected_hll``; the gap grows
        with posterior spread."""
        live = self.posterior > 0
        return float(logsumexp(np.log(self.posterior[live]) + self.component_hll[live]))


def expected_holdout_ll(pm: PublisherModel, c_full: Cascade, T: float,
                        horizon: float = COMPLETION_HORIZON) -> HoldoutResult:
    """Posterior-weighted log-likelihood of the events after T.

    Component posteriors use the censored likelihood of the events before T.
    The full cascade is scored up to its last event plus ``horizon``.
    """
    end = float(c_full.event_times[-1]) + horizon
    observed = count_before(c_full, T)
    holdout = c_full.size - observed
    n_stars = pm.borel.n_stars
    log_prior, ll_obs, ll_full = [], [], []
    for kern, wk in pm.kernel.components:
        past = window_terms(kern, c_full, T)
        full = window_terms(kern, c_full, end)
        for n_star, wb in pm.borel.components:
            with np.errstate(divide="ignore"):
                log_prior.append(math.log(wb * wk))
                ll_obs.append(past.log_likelihood(n_star))
                ll_full.append(full.log_likelihood(n_star))
    log_prior = np.array(log_prior)
    ll_obs = np.array(ll_obs)
    ll_full = np.array(ll_full)
    log_post = log_prior + ll_obs
    fallback = not np.any(np.isfinite(log_post))
    if fallback:
        log_post = log_prior
    post = np.exp(log_post - logsumexp(log_post))
    with np.errstate(invalid="ignore"):
        comp = ll_full - ll_obs
    live = post > 0
    expected = float(np.sum(post[live] * comp[live]))
    # components are ordered kernel-major; reorder to borel-major to match DualMixture.product
    nb, nk = len(n_stars), len(pm.kernel)
    post = post.reshape(nk, nb).T.reshape(-1)
    comp = comp.reshape(nk, nb).T.reshape(-1)
    return HoldoutResult(expected, holdout, post, comp, fallback)


def absolute_relative_error(predicted: float, actual: float) -> float:
    if actual <= 0:
        raise ValueError("absolute relative error is undefined for a zero actual size")
    return abs(predicted - actual) / actual
