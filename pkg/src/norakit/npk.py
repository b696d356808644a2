"""Neighborhood prior-adjusted KNN (NPK) label filtering.

Pipeline: L2-normalize embeddings, retrieve the k most similar samples by
inner product (self excluded), count neighbor labels per class, divide the
counts by the class priors of the pool, and score each sample by how its own
label's adjusted count compares with the best class. The highest-scoring
fraction is retained.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import KTooLarge


@dataclass
class NpkConfig:
    k: int = 50
    epsilon: float = 1e-8
    retain_fraction: float = 0.90
    task: str = "tag"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.retain_fraction <= 1:
            raise ValueError("retain_fraction must lie in (0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


@dataclass
class EmbeddingSet:
    ids: list
    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.ids)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("ids, vectors and labels must align")
        if n < 2:
            raise ValueError("need at least two samples")
        if not np.allclose(np.linalg.norm(self.vectors, axis=1), 1.0, rtol=0, atol=1e-6):
            raise ValueError("embedding vectors must be L2-normalized")

    @classmethod
    def normalized(cls, ids, vectors, labels) -> "EmbeddingSet":
        return cls(list(ids), l2_normalize(vectors), labels)


@dataclass
class NpkScores:
    ids: list
    labels: np.ndarray
    neighbors: np.ndarray        # (N, k) indices
    counts: np.ndarray           # (N, C) m_i(c)
    priors: np.ndarray           # (C,) pi_c (0 for unobserved classes)
    adjusted: np.ndarray         # (N, C) q_i(c)
    consistency: np.ndarray      # (N,) c_i

    @property
    def majority_class(self) -> np.ndarray:
        return self.counts.argmax(axis=1)


def l2_normalize(vectors) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def class_priors(labels, n_classes: int | None = None) -> np.ndarray:
    """pi_c = N_c / N over the pool being filtered."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("need at least one label")
    n_classes = n_classes or int(labels.max()) + 1
    return np.bincount(labels, minlength=n_classes) / labels.size


def _knn_block(vectors, rows, k):
    sims = vectors[rows] @ vectors.T
    sims[np.arange(len(rows)), rows] = -np.inf
    # stable sort on the negated similarity keeps ascending index among ties
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def knn(emb: EmbeddingSet, k: int, block_size: int = 1024, threads: int = 1) -> np.ndarray:
    """Exact k-NN by inner product, self excluded, ties broken by lower index.

    Queries are processed in row blocks; with ``threads > 1`` the blocks run on
    a thread pool. Results do not depend on the partitioning.
    """
    N = emb.vectors.shape[0]
    if k > N - 1:
        raise KTooLarge(f"k={k} exceeds N-1={N - 1}")
    if k < 1:
        raise ValueError("k must be >= 1")
    blocks = [np.arange(s, min(s + block_size, N)) for s in range(0, N, block_size)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda r: _knn_block(emb.vectors, r, k), blocks))
    else:
        parts = [_knn_block(emb.vectors, r, k) for r in blocks]
    return np.vstack(parts)


def consistency_scores(neighbor_labels, priors, labels, epsilon: float = 1e-8):
    """Returns (m, q, c) for neighbor label matrix (N, k)."""
    neighbor_labels = np.asarray(neighbor_labels, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    priors = np.asarray(priors, dtype=np.float64)
    N, _ = neighbor_labels.shape
    C = priors.shape[0]
    m = np.zeros((N, C), dtype=np.int64)
    np.add.at(m, (np.repeat(np.arange(N), neighbor_labels.shape[1]), neighbor_labels.ravel()), 1)
    q = m / (priors + epsilon)
    c = q[np.arange(N), labels] / (q.max(axis=1) + epsilon)
    return m, q, c


def npk_scores(emb: EmbeddingSet, cfg: NpkConfig, n_classes: int | None = None,
               threads: int = 1) -> NpkScores:
    nbrs = knn(emb, cfg.k, threads=threads)
    priors = class_priors(emb.labels, n_classes)
    m, q, c = consistency_scores(emb.labels[nbrs], priors, emb.labels, cfg.epsilon)
    return NpkScores(list(emb.ids), emb.labels, nbrs, m, priors, q, c)


def retain_count(n: int, fraction: float) -> int:
    # tolerance absorbs binary representation error (0.7 * 10 = 7.000000000000001)
    return min(n, int(math.floor(fraction * n + 1e-9)))


@dataclass
class FilterResult:
    retained: list
    order: list          # sample indices ranked best first
    keep_mask: np.ndarray

    def audit_csv(self, scores: NpkScores, class_names=None) -> str:
        names = class_names or [str(i) for i in range(scores.counts.shape[1])]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "c_i", "gold", "majority_neighbor_class", "retained"])
        maj = scores.majority_class
        for i in self.order:
            w.writerow([scores.ids[i], repr(float(scores.consistency[i])), names[scores.labels[i]],
                        names[maj[i]], int(self.keep_mask[i])])
        return buf.getvalue()

    def dropped(self, scores: NpkScores) -> list:
        maj = scores.majority_class
        return [(scores.ids[i], float(scores.consistency[i]), int(maj[i]), int(scores.labels[i]))
                for i in self.order if not self.keep_mask[i]]


def filter_subset(scores: NpkScores, retain_fraction: float) -> FilterResult:
    """Rank by c_i descending (ties: ascending id) and keep floor(f * N)."""
    if not 0 < retain_fraction <= 1:
        raise ValueError("retain_fraction must lie in (0, 1]")
    N = len(scores.ids)
    order = sorted(range(N), key=lambda i: (-scores.consistency[i], scores.ids[i]))
    n_keep = retain_count(N, retain_fraction)
    mask = np.zeros(N, dtype=bool)
    mask[order[:n_keep]] = True
    return FilterResult([scores.ids[i] for i in order[:n_keep]], order, mask)
