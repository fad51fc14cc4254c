"""Borel mixture (cascade sizes) and kernel mixture (inter-arrival
structure) models fitted by EM, AIC selection of the component count, and
the cartesian-product assembly of the dual mixture.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .borel import MAX_BRANCHING, borel_log_pmf
from .cascades import Cascade, cascade_sizes
from .kernels import KernelFamily, KernelParams
from .likelihood import LagTable, fit_kernel_mle, maximize_kernel
from .quantiles import weighted_quantiles

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9


class InsufficientDataError(ValueError):
    pass


class OverParameterizedWarning(UserWarning):
    pass


def _check_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("mixture needs at least one component")
    if np.any(w <= 0) or np.any(w > 1 + WEIGHT_TOL):
        raise ValueError("component weights must lie in (0, 1]")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"component weights sum to {w.sum()!r}, not 1")


@dataclass(frozen=True)
class BorelMixture:
    components: tuple[tuple[float, float], ...]   # (n_star, weight)

    def __post_init__(self):
        comps = tuple((float(n), float(w)) for n, w in self.components)
        object.__setattr__(self, "components", comps)
        _check_weights([w for _, w in comps])
        for n, _ in comps:
            if not 0.0 <= n < 1.0:
                raise ValueError(f"branching factor {n!r} outside [0, 1)")

    @property
    def n_stars(self) -> np.ndarray:
        return np.array([n for n, _ in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.components])

    def __len__(self):
        return len(self.components)

    def log_likelihood(self, sizes, counts=None) -> float:
        sizes, counts = compress_sizes(sizes, counts)
        return float(np.dot(counts, _bmm_log_mix(sizes, self.n_stars, self.weights)[1]))

    def posterior(self, sizes) -> np.ndarray:
        """Membership probabilities p(k | N) for each size."""
        sizes = np.asarray(sizes, dtype=np.int64)
        log_q, ll = _bmm_log_mix(sizes, self.n_stars, self.weights)
        return np.exp(log_q - ll[:, None])


@dataclass(frozen=True)
class KernelMixture:
    components: tuple[tuple[KernelParams, float], ...]

    def __post_init__(self):
        comps = tuple((k, float(w)) for k, w in self.components)
        object.__setattr__(self, "components", comps)
        _check_weights([w for _, w in comps])
        if len({k.family for k, _ in comps}) != 1:
            raise ValueError("kernel mixture components must share one family")

    @property
    def family(self) -> KernelFamily:
        return self.components[0][0].family

    @property
    def kernels(self) -> list[KernelParams]:
        return [k for k, _ in self.components]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.components])

    def __len__(self):
        return len(self.components)

    def log_likelihood(self, group: Sequence[Cascade]) -> float:
        table = LagTable(group)
        logf = np.column_stack([table.per_cascade(k) for k in self.kernels])
        return float(np.sum(logsumexp(logf + np.log(self.weights), axis=1)))

    def posterior(self, group: Sequence[Cascade]) -> np.ndarray:
        table = LagTable(group)
        log_q = np.column_stack([table.per_cascade(k) for k in self.kernels]) + np.log(self.weights)
        return np.exp(log_q - logsumexp(log_q, axis=1, keepdims=True))


@dataclass(frozen=True)
class DualMixture:
    borel: BorelMixture
    kernel: KernelMixture

    @property
    def product(self) -> list[tuple[float, KernelParams, float]]:
        return [(n, k, wb * wk)
                for n, wb in self.borel.components
                for k, wk in self.kernel.components]

    def __len__(self):
        return len(self.borel) * len(self.kernel)


@dataclass
class FitReport:
    final_log_likelihood: float
    iterations: int
    converged: bool
    membership: np.ndarray | None = None
    history: list[float] = field(default_factory=list)
    collapsed: int = 0
    restarts: int = 1
    notes: list[str] = field(default_factory=list)
    restart_histories: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"final_log_likelihood": self.final_log_likelihood,
                "iterations": self.iterations, "converged": self.converged,
                "collapsed": self.collapsed, "restarts": self.restarts,
                "notes": list(self.notes)}


@dataclass(frozen=True)
class BMMConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    restarts: int = 5
    collapse_weight: float = 1e-6
    seed: int | None = 0


@dataclass(frozen=True)
class KMMConfig:
    tol: float = 1e-8
    max_iter: int = 200
    restarts: int = 5
    inner_max_evals: int = 200
    solver: str = "nelder-mead"
    collapse_weight: float = 1e-6
    max_parents: int | None = None
    seed: int | None = 0


def compress_sizes(sizes, counts=None) -> tuple[np.ndarray, np.ndarray]:
    """(distinct sizes, multiplicities), sorted by size."""
    sizes = np.asarray(sizes, dtype=np.int64).reshape(-1)
    if sizes.size == 0:
        raise ValueError("need at least one cascade size")
    if np.any(sizes < 1):
        raise ValueError("cascade sizes must be >= 1")
    if counts is None:
        return np.unique(sizes, return_counts=True)
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    uniq, inverse = np.unique(sizes, return_inverse=True)
    return uniq, np.bincount(inverse, weights=counts).astype(np.int64)


def _bmm_log_mix(sizes, n_stars, weights):
    with np.errstate(divide="ignore"):
        log_q = np.log(weights)[None, :] + borel_log_pmf(n_stars[None, :], sizes[:, None].astype(float))
    return log_q, logsumexp(log_q, axis=1)


def _borel_terms(sizes):
    """Size-only part of log B(N | n*) = (N-1) log N - log N! + [(N-1) log n* - N n*]."""
    s = sizes.astype(float)
    return s, xlogy(s - 1.0, s) - gammaln(s + 1.0)


def _bmm_log_mix_fast(terms, n_stars, weights):
    s, const = terms
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = (np.log(weights)[None, :] + xlogy(s[:, None] - 1.0, n_stars[None, :])
                 - s[:, None] * n_stars[None, :] + const[:, None])
    m = np.max(log_q, axis=1)
    finite = np.isfinite(m)
    ll = np.full(m.shape, -np.inf)
    ll[finite] = m[finite] + np.log(np.sum(np.exp(log_q[finite] - m[finite, None]), axis=1))
    return log_q, ll


def _converged(new, old, tol):
    return abs(new - old) <= tol * max(abs(old), 1.0)


def _bmm_init(sizes, counts, k, rng, restart):
    naive = (sizes - 1.0) / sizes
    if restart == 0:
        levels = (np.arange(k) + 0.5) / k
        weights = np.full(k, 1.0 / k)
    else:
        levels = np.sort(rng.uniform(0.0, 1.0, k))
        weights = rng.dirichlet(np.ones(k))
    n0 = weighted_quantiles(naive, counts.astype(float), levels)
    # n*=0 is absorbing under EM and equal components never separate
    n0 = np.clip(n0, 0.005, 0.99) + 0.01 * np.arange(k) / k
    return np.minimum(n0, MAX_BRANCHING), weights


def _bmm_em(sizes, counts, n_stars, weights, config):
    total = counts.sum()
    terms = _borel_terms(sizes)
    s = terms[0]
    active = np.ones(n_stars.size, dtype=bool)
    log_q, ll = _bmm_log_mix_fast(terms, n_stars, weights)
    L = float(np.dot(counts, ll))
    history = [L]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        r = np.exp(log_q - ll[:, None]) * counts[:, None]
        nk = r.sum(axis=0)
        new_n = np.where(nk > 0, (r.T @ (s - 1.0)) / np.maximum(r.T @ s, 1e-300), n_stars)
        n_stars = np.clip(new_n, 0.0, MAX_BRANCHING)
        weights = nk / total
        active &= weights >= config.collapse_weight
        weights = np.where(active, weights, 0.0)
        weights = weights / weights.sum()
        log_q, ll = _bmm_log_mix_fast(terms, n_stars, weights)
        L_new = float(np.dot(counts, ll))
        history.append(L_new)
        if _converged(L_new, L, config.tol):
            L = L_new
            converged = True
            break
        L = L_new
    return n_stars, weights, active, L, history, it, converged


def fit_bmm(sizes, k: int, config: BMMConfig = BMMConfig(), counts=None,
            rng: np.random.Generator | None = None) -> tuple[BorelMixture, FitReport]:
    """EM for a k-component Borel mixture over cascade sizes.

    Runs on the (size, count) compression, so passing an expanded multiset
    or its counts gives the same result.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    sizes, counts = compress_sizes(sizes, counts)
    if k > sizes.size:
        warnings.warn(f"{k} components for {sizes.size} distinct sizes; components may collapse",
                      OverParameterizedWarning, stacklevel=2)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    best, traces = None, []
    for restart in range(max(1, config.restarts)):
        n0, w0 = _bmm_init(sizes, counts, k, rng, restart)
        result = _bmm_em(sizes, counts, n0, w0, config)
        traces.append(result[4])
        if best is None or result[3] > best[3]:
            best = result
    n_stars, weights, active, L, history, iterations, converged = best
    order = np.argsort(n_stars[active], kind="stable")
    n_act, w_act = n_stars[active][order], weights[active][order]
    w_act = w_act / w_act.sum()
    mixture = BorelMixture(tuple(zip(n_act, w_act)))
    report = FitReport(L, iterations, converged, mixture.posterior(sizes), history,
                       int((~active).sum()), max(1, config.restarts), restart_histories=traces)
    if report.collapsed:
        report.notes.append(f"{report.collapsed} component(s) collapsed")
    return mixture, report


PENALTIES = ("components", "parameters")


def aic(k: int, log_likelihood: float, penalty: str = "components") -> float:
    """2k - 2L with k the component count, or with the free-parameter
    count 2k - 1 (k branching factors plus k - 1 weights)."""
    if penalty == "components":
        dof = k
    elif penalty == "parameters":
        dof = 2 * k - 1
    else:
        raise ValueError(f"penalty must be one of {PENALTIES}")
    return 2.0 * dof - 2.0 * log_likelihood


def select_k_bmm(sizes, k_range=range(1, 6), config: BMMConfig = BMMConfig(),
                 counts=None, penalty: str = "components"
                 ) -> tuple[int, dict[int, float], dict[int, tuple[BorelMixture, FitReport]]]:
    """Pick k by AIC (default 2k - 2 L_BMM); ties go to the smaller k."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    table, fits = {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverParameterizedWarning)
        for k in ks:
            mix, rep = fit_bmm(sizes, k, config, counts=counts)
            table[k] = aic(k, rep.final_log_likelihood, penalty)
            fits[k] = (mix, rep)
    best = ks[0]
    for k in ks[1:]:
        if table[k] < table[best]:
            best = k
    return best, table, fits


def _kmm_em(table, kernels, weights, family, config):
    n = table.n_cascades
    active = np.ones(len(kernels), dtype=bool)

    def e_step(kernels, weights):
        logf = np.full((n, len(kernels)), -np.inf)
        for j, kern in enumerate(kernels):
            if active[j]:
                logf[:, j] = table.per_cascade(kern)
        with np.errstate(divide="ignore"):
            log_q = logf + np.log(weights)[None, :]
        ll = logsumexp(log_q, axis=1)
        return log_q, ll

    log_q, ll = e_step(kernels, weights)
    L = float(ll.sum())
    history = [L]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        r = np.exp(log_q - ll[:, None])
        weights = r.sum(axis=0) / n
        dropped = active & (weights < config.collapse_weight)
        active &= ~dropped
        weights = np.where(active, weights, 0.0)
        weights /= weights.sum()
        kernels = [maximize_kernel(table, r[:, j], family, kern, config.solver,
                                   config.inner_max_evals)[0] if active[j] else kern
                   for j, kern in enumerate(kernels)]
        log_q, ll = e_step(kernels, weights)
        L_new = float(ll.sum())
        history.append(L_new)
        if _converged(L_new, L, config.tol):
            L = L_new
            converged = True
            break
        L = L_new
    return kernels, weights, active, L, history, it, converged, np.exp(log_q - ll[:, None])


def fit_kmm(group: Sequence[Cascade], k: int, kernel_family, config: KMMConfig = KMMConfig(),
            rng: np.random.Generator | None = None) -> tuple[KernelMixture, FitReport]:
    """EM for a k-component kernel mixture; single-event cascades are skipped.

    Each M-step maximises the responsibility-weighted kernel log-likelihood
    with a bounded solver started from the current parameters and never
    accepts a worse point, so L_KMM does not decrease beyond rounding.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    family = KernelFamily.parse(kernel_family)
    usable = [c for c in group if c.size >= 2]
    if not usable:
        raise InsufficientDataError("kernel mixture needs a cascade with at least two events")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    table = LagTable(usable, config.max_parents)
    single = fit_kernel_mle(usable, family, config.solver, table=table)
    if k > len(usable):
        warnings.warn(f"{k} kernel components for {len(usable)} cascades",
                      OverParameterizedWarning, stacklevel=2)

    best, traces = None, []
    for restart in range(max(1, config.restarts)):
        if restart == 0:
            spread = np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)
            weights = np.full(k, 1.0 / k)
        else:
            spread = np.sort(rng.uniform(-1.0, 1.0, k))
            weights = rng.dirichlet(np.ones(k))
        kernels = [KernelParams(family, float(np.clip(single.theta * 10.0 ** s, 1e-6, 1e4)), single.c)
                   for s in spread]
        result = _kmm_em(table, kernels, weights, family, config)
        traces.append(result[4])
        if best is None or result[3] > best[3]:
            best = result
    kernels, weights, active, L, history, iterations, converged, membership = best
    kept = [(kernels[j], weights[j]) for j in range(k) if active[j]]
    kept.sort(key=lambda kw: (kw[0].theta, kw[0].c or 0.0))
    total = sum(w for _, w in kept)
    mixture = KernelMixture(tuple((kern, w / total) for kern, w in kept))
    report = FitReport(L, iterations, converged, membership[:, active], history,
                       int((~active).sum()), max(1, config.restarts), restart_histories=traces)
    skipped = len(group) - len(usable)
    if skipped:
        report.notes.append(f"{skipped} single-event cascade(s) excluded")
    if report.collapsed:
        report.notes.append(f"{report.collapsed} component(s) collapsed")
    return mixture, report


def assemble_dual(bmm: BorelMixture, kmm: KernelMixture) -> DualMixture:
    return DualMixture(bmm, kmm)


def fit_dual(group: Sequence[Cascade], kernel_family, k: int | None = None,
             k_range=range(1, 6), kmm_k: int | None = None,
             bmm_config: BMMConfig = BMMConfig(), kmm_config: KMMConfig = KMMConfig(),
             penalty: str = "components"):
    """BMM (k fixed or chosen by AIC) plus KMM on one group of cascades.

    Returns (dual or None, bmm, kmm or None, aic table, bmm report, kmm report or None).
    The KMM reuses the BMM component count unless ``kmm_k`` is given.
    """
    sizes = cascade_sizes(group)
    if k is None:
        k, aic_table, fits = select_k_bmm(sizes, k_range, bmm_config, penalty=penalty)
        bmm, bmm_report = fits[k]
    else:
        bmm, bmm_report = fit_bmm(sizes, k, bmm_config)
        aic_table = {k: aic(k, bmm_report.final_log_likelihood, penalty)}
    kk = k if kmm_k is None else kmm_k
    try:
        kmm, kmm_report = fit_kmm(group, kk, kernel_family, kmm_config)
    except InsufficientDataError:
        return None, bmm, None, aic_table, bmm_report, None
    return assemble_dual(bmm, kmm), bmm, kmm, aic_table, bmm_report, kmm_report
