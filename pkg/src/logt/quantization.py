"""Product quantization of memory vectors.

Each memory vector is cut into ``m_pq`` sub-vectors, each replaced by the
index (one byte) of its nearest centroid in a per-subspace codebook of 256
entries learned by k-means. Query measurements use per-subspace lookup
tables of inner products, which equals the dot product with the
reconstructed vector.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Assignment, Dataset, MemoryBank, SparseDecoder
from .decoding import build_decoder
from .errors import DimensionMismatch, InvalidParams

N_CENTROIDS = 256
KMEANS_ITERS = 25


@dataclass(frozen=True, eq=False)
class ProductQuantizer:
    codebooks: np.ndarray  # (m_pq, 256, d_sub)
    seed: Optional[int] = None
    iters: int = KMEANS_ITERS

    @property
    def m_pq(self) -> int:
        return self.codebooks.shape[0]

    @property
    def d_sub(self) -> int:
        return self.codebooks.shape[2]

    @property
    def d(self) -> int:
        return self.m_pq * self.d_sub

    @property
    def code_bytes(self) -> int:
        return self.m_pq

    def with_codebooks(self, codebooks: np.ndarray) -> "ProductQuantizer":
        return dataclasses.replace(self, codebooks=codebooks)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        """Reconstructed vectors as the columns of a ``(d, M)`` array."""
        codes = np.asarray(codes)
        parts = [self.codebooks[s][codes[:, s]] for s in range(self.m_pq)]
        return np.asfortranarray(np.hstack(parts).T)


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (data * data).sum(1)[:, None] - 2.0 * data @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding. With fewer distinct points than k, duplicates are drawn uniformly."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = ((data - centers[0]) ** 2).sum(1)
    for c in range(1, k):
        total = closest.sum()
        pick = rng.integers(n) if total <= 0.0 else rng.choice(n, p=closest / total)
        centers[c] = data[pick]
        np.minimum(closest, ((data - centers[c]) ** 2).sum(1), out=closest)
    return centers


def lloyd_step(data: np.ndarray, centroids: np.ndarray):
    """One assignment + update round. Returns (new centroids, labels, distortion).

    Empty clusters are re-seeded, in index order, with the point of the
    currently largest cluster that lies farthest from that cluster's mean.
    """
    d2 = _sq_dists(data, centroids)
    labels = np.argmin(d2, axis=1)
    distortion = float(d2[np.arange(data.shape[0]), labels].mean())
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, data)
    new = centroids.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    for e in np.flatnonzero(~filled):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(((data[members] - new[big]) ** 2).sum(1)))]
        new[e] = data[far]
        labels[far] = e
        counts[big] -= 1
        counts[e] = 1
    return new, labels, distortion


def kmeans(data: np.ndarray, k: int = N_CENTROIDS, iters: int = KMEANS_ITERS,
           rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    centroids = kmeans_plusplus_init(data, k, rng)
    for _ in range(iters):
        centroids = lloyd_step(data, centroids)[0]
    return centroids


def pq_train(training: np.ndarray, m_pq: int, seed: Optional[int] = None, iters: int = KMEANS_ITERS) -> ProductQuantizer:
    """Learn one 256-entry codebook per subspace from the columns of ``training`` (d x n)."""
    training = np.asarray(training, dtype=np.float64)
    d = training.shape[0]
    if m_pq < 1 or d % m_pq:
        raise InvalidParams(f"m_pq={m_pq} must divide d={d}")
    d_sub = d // m_pq
    rng = np.random.default_rng(seed)
    books = np.empty((m_pq, N_CENTROIDS, d_sub))
    for s in range(m_pq):
        books[s] = kmeans(training[s * d_sub:(s + 1) * d_sub].T, N_CENTROIDS, iters, rng)
    return ProductQuantizer(books, seed, iters)


def pq_encode(pq: ProductQuantizer, vectors) -> np.ndarray:
    """Nearest-centroid byte codes, shape ``(M, m_pq)``, for the columns of ``vectors``."""
    Y = vectors.Y if isinstance(vectors, MemoryBank) else np.asarray(vectors, dtype=np.float64)
    if Y.shape[0] != pq.d:
        raise DimensionMismatch(f"vectors have dimension {Y.shape[0]}, quantizer expects {pq.d}")
    codes = np.empty((Y.shape[1], pq.m_pq), dtype=np.uint8)
    for s in range(pq.m_pq):
        sub = Y[s * pq.d_sub:(s + 1) * pq.d_sub].T
        codes[:, s] = np.argmin(_sq_dists(sub, pq.codebooks[s].astype(np.float64)), axis=1)
    return codes


def pq_measure(pq: ProductQuantizer, codes: np.ndarray, query) -> np.ndarray:
    """Asymmetric measurements c_j = q . y_hat_j via per-subspace lookup tables."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (pq.d,):
        raise DimensionMismatch(f"query must have shape ({pq.d},), got {q.shape}")
    tables = np.einsum("skd,sd->sk", pq.codebooks.astype(np.float64), q.reshape(pq.m_pq, pq.d_sub))
    c = np.zeros(codes.shape[0])
    for s in range(pq.m_pq):
        c += tables[s][codes[:, s]]
    return c


def quantized_bank(pq: ProductQuantizer, codes: np.ndarray, construction: str = "pinv") -> MemoryBank:
    return MemoryBank(pq.decode(codes), construction, pq, codes)


def build_decoder_pq(pq: ProductQuantizer, codes: np.ndarray, dataset: Dataset, assignment: Assignment,
                     order: int = 1, L: Optional[int] = None, **kw) -> SparseDecoder:
    """Decoder fitted against the reconstructed (quantized) memory vectors."""
    return build_decoder(quantized_bank(pq, codes), dataset, assignment, order, L, **kw)
