import warnings

import numpy as np
import pytest
from scipy import stats

from dmhp.borel import borel_pmf
from dmhp.cascades import Cascade, truncate
from dmhp.forecast import residual_intensity
from dmhp.kernels import KernelParams, kernel_cdf
from dmhp.simulate import (SimConfig, SimulationTruncated, continuation_sizes, simulate_cascade,
                           simulate_cascades, simulate_continuation, simulate_sizes, simulate_tree,
                           spawn_rngs)

EXP = KernelParams.exponential(1.5)


def test_no_branching_gives_lone_seed(rng):
    assert all(c.size == 1 for c in simulate_cascades(SimConfig(0.0, EXP), 100, rng))


def test_cascades_are_valid_and_sorted(rng):
    for c in simulate_cascades(SimConfig(0.8, KernelParams.power_law(1.1, 0.5)), 300, rng):
        assert c.event_times[0] == 0 and np.all(np.diff(c.event_times) >= 0)


def test_borel_sizes_and_mean(rng):
    sizes = simulate_sizes(0.5, 100_000, rng)
    assert abs(sizes.mean() - 2.0) < 3 * np.sqrt(4.0 / sizes.size)
    k = np.arange(1, 11)
    emp = np.array([(sizes == j).mean() for j in k])
    p = borel_pmf(0.5, k)
    assert np.all(np.abs(emp - p) <= 3 * np.sqrt(p * (1 - p) / sizes.size))


def test_offspring_counts_are_poisson():
    forests = [simulate_tree(SimConfig(0.7, EXP), np.random.default_rng(s)) for s in range(3000)]
    counts = np.concatenate([np.bincount(f.parent[f.parent >= 0], minlength=f.times.size) for f in forests])
    counts = counts[:100_000]
    kmax = 6
    observed = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
    pmf = stats.poisson.pmf(np.arange(kmax), 0.7)
    expected = counts.size * np.append(pmf, 1 - pmf.sum())
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_parent_child_delays_follow_kernel():
    k = KernelParams.power_law(1.3, 0.4)
    cfg = SimConfig(0.9, k)
    delays = []
    r = np.random.default_rng(3)
    while sum(d.size for d in delays) < 100_000:
        f = simulate_tree(cfg, r)
        child = np.flatnonzero(f.parent >= 0)
        delays.append(f.times[child] - f.times[f.parent[child]])
    delays = np.concatenate(delays)[:100_000]
    assert stats.kstest(delays, lambda x: kernel_cdf(k, x)).pvalue > 0.01


def test_generations_increase_along_parents(rng):
    f = simulate_tree(SimConfig(0.8, EXP), rng)
    child = np.flatnonzero(f.parent >= 0)
    assert np.all(f.generation[child] == f.generation[f.parent[child]] + 1)
    assert np.all(f.times[child] >= f.times[f.parent[child]])


def test_seed_determinism():
    a = simulate_cascades(SimConfig(0.7, EXP, seed=9), 50)
    b = simulate_cascades(SimConfig(0.7, EXP, seed=9), 50)
    assert a == b
    r1, r2 = spawn_rngs(4, 2)
    assert r1.random() != r2.random()
    assert spawn_rngs(4, 2)[0].random() == spawn_rngs(4, 2)[0].random()


def test_event_cap_flags_truncation():
    with pytest.warns(SimulationTruncated):
        c = simulate_cascade(SimConfig(0.99, EXP, max_events=5, seed=1))
    assert c.size <= 5


def test_horizon_cuts_events():
    c = simulate_cascade(SimConfig(0.9, EXP, seed=2, horizon=1.0))
    assert np.all(c.event_times < 1.0)


def test_continuation_without_residual_is_unchanged():
    c = truncate(Cascade([0, 0.5]), 1e9)
    cfg = SimConfig(0.5, EXP, seed=0)
    assert simulate_continuation(c, 1e9, cfg) is c


def test_continuation_events_after_T(rng):
    c = truncate(Cascade([0, 0.2, 0.9]), 1.0)
    cfg = SimConfig(0.8, EXP)
    for _ in range(50):
        full = simulate_continuation(c, 1.0, cfg, rng)
        new = full.event_times[3:]
        assert np.all(new > 1.0)
        assert np.array_equal(full.event_times[:3], c.event_times)


def test_continuation_mean_matches_closed_form(rng):
    c = truncate(Cascade([0, 0.3, 0.4]), 1.0)
    cfg = SimConfig(0.6, KernelParams.power_law(1.2, 0.5))
    lam = residual_intensity(0.6, cfg.kernel, c, 1.0)
    extra = continuation_sizes(c, 1.0, cfg, 50_000, rng) - 3
    assert extra.mean() == pytest.approx(lam / 0.4, rel=0.02)


def test_invalid_config():
    with pytest.raises(ValueError):
        SimConfig(1.0, EXP)
    with pytest.raises(ValueError):
        SimConfig(0.5, EXP, max_events=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_cascade(SimConfig(0.1, EXP, seed=0))
