"""Cluster-representation simulator for cascades without background rate.

Every event spawns Poisson(n*) children whose delays are i.i.d. draws
from the memory kernel. Trees are grown breadth-first, one generation at
a time, for many cascades at once.

RNG streams: a batch uses one generator; independent tasks derive their
generators with ``spawn_rngs(seed, n)`` (``SeedSequence(seed).spawn``),
so task i always gets the same stream regardless of scheduling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cascades import Cascade, count_before
from .kernels import KernelParams, kernel_tail, sample_delay, sample_delay_beyond

DEFAULT_MAX_EVENTS = 10**6


class SimulationTruncated(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_star: float
    kernel: KernelParams
    max_events: int = DEFAULT_MAX_EVENTS
    seed: int | None = None
    horizon: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.n_star < 1.0:
            raise ValueError(f"n_star must lie in [0, 1), got {self.n_star!r}")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class Forest:
    """Events of several trees, sorted by (owner, time)."""

    owner: np.ndarray
    times: np.ndarray
    parent: np.ndarray       # index into the same arrays, -1 for roots
    generation: np.ndarray
    truncated: np.ndarray    # per owner


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _uniform(rng, n):
    # (0, 1]: keeps -log(u) finite
    return 1.0 - rng.random(n)


def grow(root_owner, root_times, n_owners: int, n_star: float, kernel: KernelParams,
         rng: np.random.Generator, max_events=DEFAULT_MAX_EVENTS,
         horizon: float | None = None) -> Forest:
    """Grow Poisson(n*) offspring trees from the given roots.

    ``max_events`` caps the events per owner (scalar or per-owner array),
    roots included.
    """
    root_owner = np.asarray(root_owner, dtype=np.int64)
    root_times = np.asarray(root_times, dtype=np.float64)
    cap = np.broadcast_to(np.asarray(max_events, dtype=np.int64), (n_owners,))
    counts = np.bincount(root_owner, minlength=n_owners)
    truncated = counts > cap

    owners, times, parents, gens = [root_owner], [root_times], [np.full(root_owner.size, -1)], [np.zeros(root_owner.size, dtype=np.int64)]
    cur_owner, cur_time = root_owner, root_times
    cur_index = np.arange(root_owner.size)
    offset = root_owner.size
    generation = 0
    while cur_owner.size:
        generation += 1
        k = rng.poisson(n_star, size=cur_owner.size) if n_star > 0 else np.zeros(cur_owner.size, dtype=np.int64)
        total = int(k.sum())
        if total == 0:
            break
        child_owner = np.repeat(cur_owner, k)
        child_parent = np.repeat(cur_index, k)
        child_time = np.repeat(cur_time, k) + sample_delay(kernel, _uniform(rng, total))
        if horizon is not None:
            alive = child_time < horizon
            child_owner, child_time, child_parent = child_owner[alive], child_time[alive], child_parent[alive]
        order = np.argsort(child_owner, kind="stable")
        sorted_owner = child_owner[order]
        rank = np.empty(child_owner.size, dtype=np.int64)
        rank[order] = np.arange(child_owner.size) - np.searchsorted(sorted_owner, sorted_owner, side="left")
        over = rank >= cap[child_owner] - counts[child_owner]
        if np.any(over):
            truncated[np.unique(child_owner[over])] = True
            keep = ~over
            child_owner, child_time, child_parent = child_owner[keep], child_time[keep], child_parent[keep]
        n_new = child_owner.size
        counts += np.bincount(child_owner, minlength=n_owners)
        owners.append(child_owner)
        times.append(child_time)
        parents.append(child_parent)
        gens.append(np.full(n_new, generation, dtype=np.int64))
        cur_owner, cur_time = child_owner, child_time
        cur_index = offset + np.arange(n_new)
        offset += n_new

    owner = np.concatenate(owners)
    t = np.concatenate(times)
    parent = np.concatenate(parents)
    gen = np.concatenate(gens)
    order = np.lexsort((t, owner))
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    parent = parent[order]
    parent = np.where(parent >= 0, inverse[np.maximum(parent, 0)], -1)
    return Forest(owner[order], t[order], parent, gen[order], truncated)


def _split(forest: Forest, n_owners: int) -> list[np.ndarray]:
    bounds = np.searchsorted(forest.owner, np.arange(n_owners + 1))
    return [forest.times[bounds[i]:bounds[i + 1]] for i in range(n_owners)]


def _warn_truncated(n: int):
    if n:
        warnings.warn(f"{n} simulated cascade(s) hit max_events", SimulationTruncated, stacklevel=3)


def simulate_tree(cfg: SimConfig, rng: np.random.Generator | None = None) -> Forest:
    """One cascade with its parent links and generation labels."""
    rng = cfg.rng() if rng is None else rng
    return grow([0], [0.0], 1, cfg.n_star, cfg.kernel, rng, cfg.max_events, cfg.horizon)


def simulate_cascade(cfg: SimConfig, rng: np.random.Generator | None = None) -> Cascade:
    tree = simulate_tree(cfg, rng)
    _warn_truncated(int(tree.truncated.sum()))
    return Cascade(tree.times)


def simulate_cascades(cfg: SimConfig, num: int, rng: np.random.Generator | None = None) -> list[Cascade]:
    """``num`` independent cascades from one generator."""
    rng = cfg.rng() if rng is None else rng
    forest = grow(np.arange(num), np.zeros(num), num, cfg.n_star, cfg.kernel, rng,
                  cfg.max_events, cfg.horizon)
    _warn_truncated(int(forest.truncated.sum()))
    return [Cascade(t) for t in _split(forest, num)]


def simulate_sizes(n_star: float, num: int, rng: np.random.Generator,
                   max_events: int = DEFAULT_MAX_EVENTS) -> np.ndarray:
    """Total progeny only; the kernel does not affect sizes."""
    forest = grow(np.arange(num), np.zeros(num), num, n_star, KernelParams.exponential(1.0),
                  rng, max_events)
    _warn_truncated(int(forest.truncated.sum()))
    return np.bincount(forest.owner, minlength=num)


def _direct_offspring(c: Cascade, T: float, cfg: SimConfig, rng, num: int):
    """Roots of the future: Poisson(Lambda) children of events before T, all after T."""
    past = c.event_times[c.event_times < T]
    tail = kernel_tail(cfg.kernel, T - past)
    lam = cfg.n_star * float(np.sum(tail))
    n_direct = rng.poisson(lam, size=num) if lam > 0 else np.zeros(num, dtype=np.int64)
    total = int(n_direct.sum())
    owner = np.repeat(np.arange(num), n_direct)
    if total == 0:
        return owner, np.empty(0), past
    probs = tail / tail.sum()
    parent = rng.choice(past.size, size=total, p=probs)
    elapsed = T - past[parent]
    t = past[parent] + sample_delay_beyond(cfg.kernel, elapsed, _uniform(rng, total))
    # guard against rounding landing exactly on T
    t = np.maximum(t, np.nextafter(T, np.inf))
    return owner, t, past


def continuation_sizes(c: Cascade, T: float, cfg: SimConfig, num: int,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Final sizes of ``num`` independent continuations of the prefix before T."""
    rng = cfg.rng() if rng is None else rng
    owner, t, past = _direct_offspring(c, T, cfg, rng, num)
    room = max(cfg.max_events - past.size, 0)
    forest = grow(owner, t, num, cfg.n_star, cfg.kernel, rng, room, cfg.horizon)
    _warn_truncated(int(forest.truncated.sum()))
    return past.size + np.bincount(forest.owner, minlength=num)


def simulate_continuation(c_observed: Cascade, T: float, cfg: SimConfig,
                          rng: np.random.Generator | None = None) -> Cascade:
    """The observed prefix plus one random future drawn from the cluster process."""
    rng = cfg.rng() if rng is None else rng
    n_obs = count_before(c_observed, T)
    owner, t, past = _direct_offspring(c_observed, T, cfg, rng, 1)
    if t.size == 0:
        return c_observed
    room = max(cfg.max_events - n_obs, 0)
    forest = grow(owner, t, 1, cfg.n_star, cfg.kernel, rng, room, cfg.horizon)
    _warn_truncated(int(forest.truncated.sum()))
    return Cascade(np.concatenate([past, forest.times]))
