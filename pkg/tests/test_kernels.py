import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from dmhp.kernels import (KernelFamily, KernelParams, grad_log_pdf, kernel_cdf, kernel_log_pdf,
                          kernel_log_tail, kernel_pdf, kernel_tail, sample_delay, sample_delay_beyond)

thetas = st.floats(0.05, 20)
cs = st.floats(0.01, 100)
kernels = st.one_of(thetas.map(KernelParams.exponential),
                    st.tuples(st.floats(0.3, 20), cs).map(lambda a: KernelParams.power_law(*a)))


def test_examples():
    E, P = KernelParams.exponential, KernelParams.power_law
    assert kernel_pdf(E(1), 0) == 1.0
    assert kernel_pdf(E(2), 1) == pytest.approx(2 * math.exp(-2))
    assert kernel_pdf(P(1, 1), 1) == pytest.approx(0.25)
    assert kernel_tail(E(1), 1) == pytest.approx(math.exp(-1))
    assert kernel_tail(P(2, 1), 1) == pytest.approx(0.25)
    assert kernel_log_pdf(E(1), 0) == 0.0
    assert kernel_log_pdf(E(1), 700) == -700.0
    assert kernel_log_pdf(P(1, 1), 1) == pytest.approx(math.log(0.25))


@pytest.mark.parametrize("bad", [lambda: KernelParams.exponential(0), lambda: KernelParams.power_law(1, 0),
                                 lambda: KernelParams.power_law(-1, 1)])
def test_rejects_bad_params(bad):
    with pytest.raises(ValueError):
        bad()


def test_rejects_negative_delay():
    with pytest.raises(ValueError):
        kernel_pdf(KernelParams.exponential(1), -0.1)


@given(kernels)
def test_tail_at_zero_is_one(k):
    assert kernel_tail(k, 0.0) == 1.0


@pytest.mark.parametrize("k", [KernelParams.exponential(0.3), KernelParams.exponential(4.0),
                               KernelParams.power_law(0.8, 2.0), KernelParams.power_law(2.5, 0.1)])
def test_density_integrates_to_one(k):
    total, err = integrate.quad(lambda t: kernel_pdf(k, t), 0, np.inf, limit=500)
    assert total == pytest.approx(1.0, abs=1e-6)


@given(kernels, st.floats(0, 50))
def test_tail_matches_quadrature(k, x):
    mass, _ = integrate.quad(lambda t: kernel_pdf(k, t), x, np.inf, limit=500)
    assert kernel_tail(k, x) == pytest.approx(mass, abs=1e-7, rel=1e-5)
    assert kernel_cdf(k, x) == pytest.approx(1 - mass, abs=1e-7)


@given(kernels, st.lists(st.floats(0, 1e3), min_size=2, max_size=20))
def test_tail_non_increasing(k, xs):
    xs = np.sort(xs)
    assert np.all(np.diff(kernel_tail(k, xs)) <= 1e-15)


@given(kernels, st.floats(0, 1e4))
def test_log_forms_agree(k, x):
    assert kernel_log_tail(k, x) == pytest.approx(math.log(max(kernel_tail(k, x), 1e-300)), abs=1e-9) \
        or kernel_tail(k, x) == 0.0
    assert np.exp(kernel_log_pdf(k, x)) == pytest.approx(kernel_pdf(k, x), rel=1e-12)


@given(kernels, st.floats(0, 30))
def test_gradient_matches_finite_differences(k, tau):
    g = grad_log_pdf(k, np.array([tau]))[:, 0]
    x = k.to_log_vector()
    h = 1e-6
    for r in range(x.size):
        up, dn = x.copy(), x.copy()
        up[r] += h
        dn[r] -= h
        fd = (kernel_log_pdf(KernelParams.from_log_vector(k.family, up), tau)
              - kernel_log_pdf(KernelParams.from_log_vector(k.family, dn), tau)) / (2 * h)
        assert g[r] == pytest.approx(fd, abs=1e-5, rel=1e-5)


@pytest.mark.parametrize("k", [KernelParams.exponential(1.5), KernelParams.power_law(1.2, 0.5)])
def test_sampled_delays_follow_kernel(k, rng):
    draws = sample_delay(k, rng.random(100_000))
    assert stats.kstest(draws, lambda x: kernel_cdf(k, x)).pvalue > 0.01


@pytest.mark.parametrize("k", [KernelParams.exponential(1.5), KernelParams.power_law(1.2, 0.5)])
def test_conditional_delays_follow_truncated_kernel(k, rng):
    elapsed = 0.7
    draws = sample_delay_beyond(k, elapsed, rng.random(50_000))
    assert draws.min() > elapsed
    cond_cdf = lambda x: 1 - kernel_tail(k, x) / kernel_tail(k, elapsed)
    assert stats.kstest(draws, cond_cdf).pvalue > 0.01


def test_log_vector_round_trip():
    k = KernelParams.power_law(1.7, 0.03)
    back = KernelParams.from_log_vector(KernelFamily.POWER_LAW, k.to_log_vector())
    assert back.theta == pytest.approx(1.7, rel=1e-14) and back.c == pytest.approx(0.03, rel=1e-14)
    assert KernelFamily.parse("exp") is KernelFamily.EXPONENTIAL
    assert KernelFamily.parse("pl") is KernelFamily.POWER_LAW
