"""Item-level descriptions built from fitted dual mixtures.

Summaries are mixture-weighted means of the component parameters.
Diffusion embeddings route component weights into corpus-wide quantile
bins, one histogram per parameter (n*, c, theta), and are compared with
the closed-form 1-D Wasserstein distance between cumulative histograms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import KernelFamily
from .mixtures import DualMixture
from .quantiles import weighted_quantiles

DEFAULT_BINS = 10
PARAMETERS = ("n_star", "c", "theta")


@dataclass(frozen=True)
class Summary:
    n_hat: float          # content virality
    c_hat: float | None   # None for the exponential family
    theta_hat: float      # influence decay


def summarize(d: DualMixture) -> Summary:
    n_hat = float(np.dot(d.borel.n_stars, d.borel.weights))
    w = d.kernel.weights
    theta_hat = float(np.dot([k.theta for k in d.kernel.kernels], w))
    c_hat = None
    if d.kernel.family is KernelFamily.POWER_LAW:
        c_hat = float(np.dot([k.c for k in d.kernel.kernels], w))
    return Summary(n_hat, c_hat, theta_hat)


def _component_samples(d: DualMixture, name: str) -> tuple[np.ndarray, np.ndarray]:
    if name == "n_star":
        return d.borel.n_stars, d.borel.weights
    kernels = d.kernel.kernels
    if name == "theta":
        values = [k.theta for k in kernels]
    else:
        # exponential kernels carry no cutoff; a constant 0 keeps the block valid
        values = [0.0 if k.c is None else k.c for k in kernels]
    return np.asarray(values, dtype=float), d.kernel.weights


@dataclass(frozen=True, eq=False)
class EmbeddingEdges:
    n_star: np.ndarray
    c: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        sizes = set()
        for name in PARAMETERS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise ValueError("each parameter needs at least two bin edges")
            if np.any(np.diff(arr) < 0):
                raise ValueError("bin edges must be non-decreasing")
            sizes.add(arr.size)
            object.__setattr__(self, name, arr)
        if len(sizes) != 1:
            raise ValueError("all parameters must use the same number of bins")

    @property
    def bins(self) -> int:
        return self.n_star.size - 1

    def __eq__(self, other):
        if not isinstance(other, EmbeddingEdges):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAMETERS)

    def to_dict(self) -> dict:
        return {n: getattr(self, n).tolist() for n in PARAMETERS}

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingEdges":
        return cls(*(np.asarray(data[n], dtype=float) for n in PARAMETERS))


def corpus_edges(mixtures: Sequence[DualMixture], bins: int = DEFAULT_BINS) -> EmbeddingEdges:
    """Quantile edges q_0..q_B from the pooled weighted components of a corpus."""
    if not mixtures:
        raise ValueError("need at least one fitted mixture")
    if bins < 1:
        raise ValueError("need at least one bin")
    levels = np.linspace(0.0, 1.0, bins + 1)
    edges = []
    for name in PARAMETERS:
        vals, wts = zip(*(_component_samples(d, name) for d in mixtures))
        vals, wts = np.concatenate(vals), np.concatenate(wts)
        q = weighted_quantiles(vals, wts, levels)
        # fractional weights put the level-0 quantile above the smallest value;
        # the outer edges span the whole corpus instead
        q[0], q[-1] = vals[wts > 0].min(), vals[wts > 0].max()
        edges.append(q)
    return EmbeddingEdges(*edges)


@dataclass(frozen=True, eq=False)
class DiffusionEmbedding:
    m_nstar: np.ndarray
    m_c: np.ndarray
    m_theta: np.ndarray
    edges: EmbeddingEdges
    out_of_range: bool = False

    def vectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.m_nstar, self.m_c, self.m_theta

    def flat(self) -> np.ndarray:
        return np.concatenate(self.vectors())

    def __eq__(self, other):
        if not isinstance(other, DiffusionEmbedding):
            return NotImplemented
        return (self.edges == other.edges and self.out_of_range == other.out_of_range
                and all(np.array_equal(a, b) for a, b in zip(self.vectors(), other.vectors())))


def bin_weights(values, weights, edges) -> tuple[np.ndarray, bool]:
    """Route weights into bins (q_{i-1}, q_i]; values outside [q_0, q_B]
    land in the first or last bin and set the out-of-range flag."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    bins = edges.size - 1
    idx = np.searchsorted(edges[1:-1], values, side="left")
    out = np.bincount(idx, weights=np.asarray(weights, dtype=float), minlength=bins)
    outside = bool(np.any(values < edges[0]) or np.any(values > edges[-1]))
    return out, outside


def build_embedding(d: DualMixture, edges: EmbeddingEdges) -> DiffusionEmbedding:
    blocks, outside = [], False
    for name in PARAMETERS:
        vals, wts = _component_samples(d, name)
        block, off = bin_weights(vals, wts, getattr(edges, name))
        blocks.append(block)
        outside |= off
    return DiffusionEmbedding(*blocks, edges=edges, out_of_range=outside)


def wasserstein1(a, b) -> float:
    """W1 between two histograms on the same ordered bins: L1 distance of
    their cumulative sums."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("histograms must be 1-D and of equal length")
    return float(np.sum(np.abs(np.cumsum(a) - np.cumsum(b))))


def embedding_distance(e1: DiffusionEmbedding, e2: DiffusionEmbedding) -> float:
    if e1.edges != e2.edges:
        raise ValueError("embeddings were built with different bin edges")
    return sum(wasserstein1(a, b) for a, b in zip(e1.vectors(), e2.vectors()))


def pool_publisher_embedding(embeddings: Sequence[DiffusionEmbedding]) -> DiffusionEmbedding:
    """Element-wise mean of item embeddings, each block renormalised to 1."""
    if not embeddings:
        raise ValueError("need at least one embedding")
    edges = embeddings[0].edges
    if any(e.edges != edges for e in embeddings[1:]):
        raise ValueError("embeddings were built with different bin edges")
    blocks = []
    for j in range(3):
        mean = np.mean([e.vectors()[j] for e in embeddings], axis=0)
        blocks.append(mean / mean.sum())
    return DiffusionEmbedding(*blocks, edges=edges,
                              out_of_range=any(e.out_of_range for e in embeddings))
