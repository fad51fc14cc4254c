import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmhp.quantiles import weighted_quantiles

levels = st.lists(st.floats(0, 1), min_size=1, max_size=8)


def test_examples():
    assert weighted_quantiles([1, 2, 3], [1, 1, 1], [0.5])[0] == 2
    assert weighted_quantiles([1, 10], [1, 3], [0.5])[0] == 10
    assert np.all(weighted_quantiles([4.2], [0.3], [0, 0.3, 1]) == 4.2)


@given(st.lists(st.tuples(st.floats(-100, 100), st.integers(1, 6)), min_size=1, max_size=15), levels)
def test_integer_weights_equal_repeated_sample_quantiles(pairs, ps):
    # oracle: with integer weights the algorithm equals the default (linear)
    # quantile of the sample with each value repeated weight times
    values, weights = map(np.array, zip(*pairs))
    expanded = np.repeat(values, weights)
    got = weighted_quantiles(values, weights, ps)
    assert np.allclose(got, np.quantile(expanded, ps), atol=1e-9)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 5)), min_size=1, max_size=15), levels)
def test_monotone_and_bounded(pairs, ps):
    values, weights = map(np.array, zip(*pairs))
    ps = np.sort(ps)
    q = weighted_quantiles(values, weights, ps)
    assert np.all(np.diff(q) >= -1e-12)
    assert np.all(q >= values.min() - 1e-12) and np.all(q <= values.max() + 1e-12)


@pytest.mark.parametrize("args", [([], [], [0.5]), ([1], [0], [0.5]), ([1], [1], [1.5]), ([1, 2], [1], [0.5])])
def test_rejects_bad_input(args):
    with pytest.raises(ValueError):
        weighted_quantiles(*args)
