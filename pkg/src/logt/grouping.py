"""Assignment of dataset vectors to memory units.

Two strategies are provided: consecutive blocks of random permutations
(the classic group-testing encoder), and greedy orthogonal grouping which
fills units inside random chunks with mutually near-orthogonal vectors.
"""

from __future__ import annotations

import math
from typing import List, Optional

import numpy as np

from .core import Assignment, AssignmentParams, Dataset
from .errors import InvalidParams

DEFAULT_CHUNK_FACTOR = 16


def _check(N: int, n: int, m: int, k: int = 1) -> None:
    if N < 1:
        raise InvalidParams("dataset must contain at least one vector")
    if n < 1 or m < 1 or k < 1:
        raise InvalidParams(f"n, m and chunk factor must be >= 1 (got n={n}, m={m}, k={k})")
    if n > N:
        raise InvalidParams(f"unit size n={n} exceeds dataset size N={N}")


def random_assignment(N: int, n: int, m: int, seed: Optional[int] = None) -> Assignment:
    """m random permutations, each cut into consecutive blocks of n indices.

    M = m * ceil(N / n); the trailing block of a permutation is smaller when
    n does not divide N.
    """
    _check(N, n, m)
    rng = np.random.default_rng(seed)
    units: List[np.ndarray] = []
    for _ in range(m):
        perm = rng.permutation(N)
        units.extend(perm[s:s + n] for s in range(0, N, n))
    return Assignment.from_units(N, units, AssignmentParams(n, m, seed, "random", 1))


def group_chunk(vectors: np.ndarray, n: int, k: int) -> List[List[int]]:
    """Greedy orthogonal grouping of one chunk.

    ``vectors`` is ``(d, r)`` in chunk order. Returns ``ceil(r / n)`` (at
    most ``k``) lists of local positions. Unit u is seeded with position u;
    then, round by round, each unit in turn takes the unassigned vector
    whose largest |inner product| with the unit's members is smallest
    (lowest position wins ties).
    """
    r = vectors.shape[1]
    n_units = min(k, math.ceil(r / n))
    absgram = np.abs(vectors.T @ vectors)
    assigned = np.zeros(r, dtype=bool)
    assigned[:n_units] = True
    units = [[u] for u in range(n_units)]
    # worst interference of every candidate against each unit's members
    worst = absgram[:n_units].copy()
    remaining = r - n_units
    while remaining:
        for u in range(n_units):
            if not remaining:
                break
            if len(units[u]) >= n:
                continue
            cost = np.where(assigned, np.inf, worst[u])
            pick = int(np.argmin(cost))
            units[u].append(pick)
            assigned[pick] = True
            np.maximum(worst[u], absgram[pick], out=worst[u])
            remaining -= 1
    return units


def orthogonal_assignment(dataset: Dataset, n: int, m: int, chunk_factor: int = DEFAULT_CHUNK_FACTOR,
                          seed: Optional[int] = None) -> Assignment:
    """Greedy orthogonal memory units built chunk by chunk.

    Each of the m passes draws a fresh permutation and splits it into chunks
    of ``chunk_factor * n`` vectors; only the current chunk is ever read, so
    the cost is linear in N.
    """
    N = dataset.N
    _check(N, n, m, chunk_factor)
    rng = np.random.default_rng(seed)
    size = chunk_factor * n
    units: List[np.ndarray] = []
    for _ in range(m):
        perm = rng.permutation(N)
        for s in range(0, N, size):
            chunk = perm[s:s + size]
            seeds = min(chunk_factor, math.ceil(chunk.size / n))
            # candidates ordered by dataset index so ties go to the smallest index
            local = np.concatenate([chunk[:seeds], np.sort(chunk[seeds:])])
            for members in group_chunk(dataset.columns(local), n, chunk_factor):
                units.append(local[members])
    return Assignment.from_units(N, units, AssignmentParams(n, m, seed, "orthogonal", chunk_factor))


def intra_unit_coherence(dataset: Dataset, assignment: Assignment) -> np.ndarray:
    """Per unit, the largest |x_a . x_b| over distinct member pairs (0 for singletons)."""
    out = np.zeros(assignment.M)
    for j in range(assignment.M):
        idx = assignment.members(j)
        if idx.size < 2:
            continue
        A = dataset.X[:, idx]
        g = np.abs(A.T @ A)
        np.fill_diagonal(g, 0.0)
        out[j] = g.max()
    return out
