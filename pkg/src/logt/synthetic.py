"""Synthetic planted-match benchmark with exact ground truth."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .core import Dataset, validate_dataset
from .evaluation import GroundTruth


def random_unit_vectors(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.standard_normal((d, count))
    return X / np.linalg.norm(X, axis=0)


def planted_benchmark(N: int = 10_000, d: int = 64, n_queries: int = 100, matches: int = 5,
                      min_sim: float = 0.8, max_sim: float = 0.95,
                      seed: Optional[int] = 0) -> Tuple[Dataset, np.ndarray, GroundTruth]:
    """Random unit vectors plus, for each query, ``matches`` planted neighbours.

    A planted vector is ``a q + sqrt(1 - a^2) z`` with ``z`` a random unit
    vector orthogonal to ``q`` and ``a`` uniform in ``[min_sim, max_sim]``,
    so its similarity to the query is exactly ``a``. Returns the dataset,
    the ``(d, n_queries)`` query matrix and the planted ground truth.
    """
    if n_queries * matches > N:
        raise ValueError("not enough dataset slots for the planted matches")
    rng = np.random.default_rng(seed)
    X = random_unit_vectors(d, N, rng)
    Q = random_unit_vectors(d, n_queries, rng)
    slots = rng.choice(N, size=n_queries * matches, replace=False).reshape(n_queries, matches)
    for qi in range(n_queries):
        q = Q[:, qi]
        for slot in slots[qi]:
            z = rng.standard_normal(d)
            z -= (z @ q) * q
            z /= np.linalg.norm(z)
            a = rng.uniform(min_sim, max_sim)
            X[:, slot] = a * q + np.sqrt(1.0 - a * a) * z
    gt = GroundTruth([np.sort(s) for s in slots])
    return validate_dataset(X, normalize=True), Q, gt
