import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmhp.characterize import (DiffusionEmbedding, EmbeddingEdges, bin_weights, build_embedding,
                               corpus_edges, embedding_distance, pool_publisher_embedding,
                               summarize, wasserstein1)
from dmhp.kernels import KernelParams
from dmhp.mixtures import BorelMixture, DualMixture, KernelMixture

E, P = KernelParams.exponential, KernelParams.power_law


def simplex(n):
    return st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.array(v) / sum(v))


def dual(bmm, kmm):
    return DualMixture(BorelMixture(tuple(bmm)), KernelMixture(tuple(kmm)))


def test_summary_examples():
    d = dual([(0.2, 0.5), (0.6, 0.5)], [(E(1), 0.25), (E(3), 0.75)])
    s = summarize(d)
    assert s.n_hat == pytest.approx(0.4) and s.theta_hat == pytest.approx(2.5) and s.c_hat is None
    s = summarize(dual([(0.3, 1.0)], [(P(1.5, 0.2), 1.0)]))
    assert (s.n_hat, s.c_hat, s.theta_hat) == (0.3, 0.2, 1.5)


def test_wasserstein_examples():
    assert wasserstein1([1, 0, 0], [0, 1, 0]) == 1
    assert wasserstein1([1, 0, 0], [0, 0, 1]) == 2
    v = np.array([0.2, 0.3, 0.5])
    assert wasserstein1(v, v) == 0
    with pytest.raises(ValueError):
        wasserstein1([1, 0], [1, 0, 0])


@given(simplex(7), simplex(7), simplex(7))
def test_wasserstein_is_a_metric(a, b, c):
    ab, ba = wasserstein1(a, b), wasserstein1(b, a)
    assert ab >= 0 and ab == ba
    assert wasserstein1(a, a) == 0
    assert wasserstein1(a, c) <= ab + wasserstein1(b, c) + 1e-12


@given(simplex(6), simplex(6))
def test_wasserstein_matches_scipy(a, b):
    from scipy.stats import wasserstein_distance
    pos = np.arange(6)
    assert wasserstein1(a, b) == pytest.approx(wasserstein_distance(pos, pos, a, b), abs=1e-9)


EDGES = np.linspace(0, 1, 11)


def test_bin_routing_examples():
    m, off = bin_weights([0.25], [1.0], EDGES)
    assert list(m) == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0] and not off
    m, _ = bin_weights([0.05, 0.45], [0.4, 0.6], EDGES)
    assert m == pytest.approx([0.4, 0, 0, 0, 0.6, 0, 0, 0, 0, 0])
    # bins are (q_{i-1}, q_i]: an edge value belongs to the bin it closes
    m, _ = bin_weights([0.3], [1.0], EDGES)
    assert m[2] == 1.0
    m, off = bin_weights([1.5, -1.0], [0.5, 0.5], EDGES)
    assert m[0] == 0.5 and m[-1] == 0.5 and off


def _corpus(rng, n=12):
    out = []
    for _ in range(n):
        kb, kk = rng.integers(1, 4, size=2)
        wb, wk = rng.dirichlet(np.ones(kb)), rng.dirichlet(np.ones(kk))
        out.append(dual([(float(x), float(w)) for x, w in zip(rng.uniform(0, 0.95, kb), wb)],
                        [(P(float(t), float(c)), float(w))
                         for t, c, w in zip(rng.uniform(0.2, 5, kk), rng.uniform(0.1, 10, kk), wk)]))
    return out


def test_embeddings_sum_to_one_and_stay_in_range(rng):
    corpus = _corpus(rng)
    edges = corpus_edges(corpus, 10)
    for d in corpus:
        e = build_embedding(d, edges)
        for v in e.vectors():
            assert v.sum() == pytest.approx(1.0, abs=1e-9) and np.all(v >= 0)
        assert not e.out_of_range


def test_exponential_corpus_has_constant_cutoff_block(rng):
    corpus = [dual([(0.5, 1.0)], [(E(t), 1.0)]) for t in (0.5, 1.0, 2.0)]
    edges = corpus_edges(corpus, 4)
    assert np.all(edges.c == 0.0)
    assert build_embedding(corpus[0], edges).m_c.sum() == 1.0


def test_embedding_distance_examples(rng):
    edges = EmbeddingEdges(EDGES, EDGES, EDGES)
    a = build_embedding(dual([(0.25, 1.0)], [(P(0.5, 0.5), 1.0)]), edges)
    b = build_embedding(dual([(0.35, 1.0)], [(P(0.5, 0.5), 1.0)]), edges)
    assert embedding_distance(a, a) == 0
    assert embedding_distance(a, b) == 1
    assert embedding_distance(b, a) == 1
    other = EmbeddingEdges(EDGES, EDGES, EDGES * 2)
    with pytest.raises(ValueError):
        embedding_distance(a, build_embedding(dual([(0.25, 1.0)], [(P(0.5, 0.5), 1.0)]), other))


def test_pooled_publisher_embedding():
    edges = EmbeddingEdges(EDGES, EDGES, EDGES)
    one = build_embedding(dual([(0.05, 1.0)], [(P(0.05, 0.05), 1.0)]), edges)
    three = build_embedding(dual([(0.25, 1.0)], [(P(0.25, 0.25), 1.0)]), edges)
    assert pool_publisher_embedding([one]) == one
    pooled = pool_publisher_embedding([one, three])
    assert pooled.m_nstar[:4] == pytest.approx([0.5, 0, 0.5, 0])
    assert all(v.sum() == pytest.approx(1.0) for v in pooled.vectors())


def test_edges_round_trip_and_validate():
    edges = EmbeddingEdges(EDGES, EDGES, EDGES)
    assert EmbeddingEdges.from_dict(edges.to_dict()) == edges
    with pytest.raises(ValueError):
        EmbeddingEdges(EDGES, EDGES[:5], EDGES)
    with pytest.raises(ValueError):
        EmbeddingEdges(EDGES[::-1], EDGES[::-1], EDGES[::-1])
    assert isinstance(build_embedding(dual([(0.2, 1.0)], [(P(1, 1), 1.0)]), edges), DiffusionEmbedding)
