"""Memory vector construction: plain sums and pseudo-inverse encodings."""

from __future__ import annotations

import numpy as np

from .core import Assignment, Dataset, MemoryBank
from .errors import NumericalFailure


def encode_sum(dataset: Dataset, assignment: Assignment) -> MemoryBank:
    """y_j = sum of the members of unit j, i.e. Y = X G^T."""
    G = assignment.incidence()
    Y = np.asfortranarray((G @ dataset.X.T).T)
    return MemoryBank(Y, "sum")


def pinv_memory_vector(A: np.ndarray) -> np.ndarray:
    """Memory vector of a unit whose members are the columns of ``A`` (d x n).

    Returns ``pinv(A).T @ 1`` so that ``A.T @ y == 1`` whenever the members are
    linearly independent. Singular values below ``max(d, n) * eps * s_max``
    are dropped, which yields the minimum-norm solution for rank-deficient
    units.
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[0])
    cutoff = max(A.shape) * np.finfo(np.float64).eps * s[0]
    keep = s > cutoff
    return U[:, keep] @ (Vt[keep].sum(axis=1) / s[keep])


def encode_pinv(dataset: Dataset, assignment: Assignment, fallback_to_sum: bool = False) -> MemoryBank:
    Y = np.empty((dataset.d, assignment.M), order="F")
    for j in range(assignment.M):
        A = dataset.columns(assignment.members(j))
        try:
            Y[:, j] = pinv_memory_vector(A)
        except np.linalg.LinAlgError as exc:
            if not fallback_to_sum:
                raise NumericalFailure(f"SVD did not converge for unit {j}") from exc
            Y[:, j] = A.sum(axis=1)
    return MemoryBank(Y, "pinv")


def encode(dataset: Dataset, assignment: Assignment, method: str = "pinv") -> MemoryBank:
    if method == "sum":
        return encode_sum(dataset, assignment)
    if method == "pinv":
        return encode_pinv(dataset, assignment)
    raise ValueError(f"unknown encoder {method!r}")
