"""Shared domain types: dataset, assignment, memory bank, sparse decoder, results.

Vectors live in ``(d, N)`` Fortran-ordered arrays so that every column
(one dataset or memory vector) is contiguous in memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IndexOutOfRange, NonFinite, NotNormalized, ZeroVector

NORM_TOL = 1e-6
ZERO_TOL = 1e-12


def _as_columns(raw, name: str = "raw") -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty d x N matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf entries")
    return arr


def _unit_columns(arr: np.ndarray, normalize: bool) -> np.ndarray:
    norms = np.linalg.norm(arr, axis=0)
    zero = np.flatnonzero(norms < ZERO_TOL)
    if zero.size:
        raise ZeroVector(f"column {int(zero[0])} has norm below {ZERO_TOL:g}")
    if normalize:
        return np.asfortranarray(arr / norms)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
    if bad.size:
        raise NotNormalized(f"column {int(bad[0])} has norm {norms[bad[0]]:.9g}, expected 1")
    return np.asfortranarray(arr)


@dataclass(frozen=True, eq=False)
class Dataset:
    """N unit-norm vectors of dimension d, stored as the columns of ``X``."""

    X: np.ndarray
    ids: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.X[:, i]

    def columns(self, idx) -> np.ndarray:
        return self.X[:, idx]

    def slice(self, start: int, stop: int) -> "Dataset":
        ids = None if self.ids is None else self.ids[start:stop]
        return Dataset(np.asfortranarray(self.X[:, start:stop]), ids)


def validate_dataset(raw, normalize: bool = False, ids: Optional[Sequence] = None) -> Dataset:
    """Check a ``d x N`` matrix and wrap it as a :class:`Dataset`.

    With ``normalize`` set, columns are rescaled to unit norm; otherwise a
    column whose norm is off by more than 1e-6 raises :class:`NotNormalized`.
    """
    arr = _unit_columns(_as_columns(raw), normalize)
    id_arr = None
    if ids is not None:
        id_arr = np.asarray(ids)
        if id_arr.shape != (arr.shape[1],):
            raise DimensionMismatch(f"expected {arr.shape[1]} ids, got {id_arr.shape}")
        if np.unique(id_arr).size != id_arr.size:
            raise ValueError("ids must be unique")
    return Dataset(arr, id_arr)


def validate_query(q, d: int, normalize: bool = False) -> np.ndarray:
    """Queries obey the same unit-norm contract as dataset vectors."""
    arr = np.asarray(q, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise DimensionMismatch(f"query must have shape ({d},), got {arr.shape}")
    return _unit_columns(_as_columns(arr, "query"), normalize)[:, 0]


def exhaustive_similarities(dataset: Dataset, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (dataset.d,):
        raise DimensionMismatch(f"query must have shape ({dataset.d},), got {q.shape}")
    return dataset.X.T @ q


def _csr_from_lists(lists: Sequence[np.ndarray]):
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    flat = np.concatenate(lists).astype(np.int64) if lists else np.zeros(0, np.int64)
    return ptr, flat


@dataclass(frozen=True)
class AssignmentParams:
    n: int
    m: int
    seed: Optional[int]
    strategy: str
    chunk_factor: int = 1


@dataclass(frozen=True, eq=False)
class Assignment:
    """Bipartite membership between N vectors and M memory units (CSR both ways).

    Member lists of each unit are sorted ascending, as are the unit lists of
    each vector.
    """

    N: int
    unit_ptr: np.ndarray
    unit_members: np.ndarray
    params: AssignmentParams

    @classmethod
    def from_units(cls, N: int, units: Sequence[Sequence[int]], params: AssignmentParams) -> "Assignment":
        lists = [np.sort(np.asarray(u, dtype=np.int64)) for u in units]
        ptr, flat = _csr_from_lists(lists)
        if flat.size and (flat.min() < 0 or flat.max() >= N):
            raise IndexOutOfRange("unit member outside [0, N)")
        return cls(N, ptr, flat, params)

    @property
    def M(self) -> int:
        return len(self.unit_ptr) - 1

    @cached_property
    def unit_sizes(self) -> np.ndarray:
        return np.diff(self.unit_ptr)

    @cached_property
    def _vector_csr(self):
        unit_of_entry = np.repeat(np.arange(self.M, dtype=np.int64), self.unit_sizes)
        order = np.lexsort((unit_of_entry, self.unit_members))
        counts = np.bincount(self.unit_members, minlength=self.N)
        ptr = np.zeros(self.N + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(counts)
        return ptr, unit_of_entry[order]

    def members(self, j: int) -> np.ndarray:
        if not 0 <= j < self.M:
            raise IndexOutOfRange(f"unit {j} outside [0, {self.M})")
        return self.unit_members[self.unit_ptr[j]:self.unit_ptr[j + 1]]

    def units_of(self, i: int) -> np.ndarray:
        if not 0 <= i < self.N:
            raise IndexOutOfRange(f"vector {i} outside [0, {self.N})")
        ptr, units = self._vector_csr
        return units[ptr[i]:ptr[i + 1]]

    @property
    def units(self) -> list:
        return [self.members(j) for j in range(self.M)]

    @property
    def memberships(self) -> list:
        return [self.units_of(i) for i in range(self.N)]

    def incidence(self) -> sp.csr_matrix:
        """The M x N 0/1 matrix G (duplicate memberships are summed)."""
        data = np.ones(self.unit_members.size)
        return sp.csr_matrix((data, self.unit_members, self.unit_ptr), shape=(self.M, self.N))

    @cached_property
    def neighbors(self):
        """CSR of co-members per vector (union of its units' members, itself included)."""
        ptr, units = self._vector_csr
        lists = []
        for i in range(self.N):
            us = units[ptr[i]:ptr[i + 1]]
            parts = [self.unit_members[self.unit_ptr[j]:self.unit_ptr[j + 1]] for j in us]
            lists.append(np.unique(np.concatenate(parts)) if parts else np.array([i], np.int64))
        return _csr_from_lists(lists)

    def co_members(self, i: int) -> np.ndarray:
        ptr, flat = self.neighbors
        return flat[ptr[i]:ptr[i + 1]]


def concat_assignments(parts: Sequence[Assignment]) -> Assignment:
    N_total = sum(a.N for a in parts)
    ptrs, members = [np.zeros(1, np.int64)], []
    v_off = 0
    e_off = 0
    for a in parts:
        ptrs.append(a.unit_ptr[1:] + e_off)
        members.append(a.unit_members + v_off)
        v_off += a.N
        e_off += a.unit_members.size
    return Assignment(N_total, np.concatenate(ptrs), np.concatenate(members), parts[0].params)


@dataclass(frozen=True, eq=False)
class MemoryBank:
    """M memory vectors, the columns of ``Y`` (shape ``(d, M)``).

    When ``quantizer`` and ``codes`` are set, measurements go through the
    product-quantized representation and ``Y`` holds the reconstruction.
    """

    Y: np.ndarray
    construction: str
    quantizer: Optional[object] = None
    codes: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.Y.shape[0]

    @property
    def M(self) -> int:
        return self.Y.shape[1]

    @property
    def quantized(self) -> bool:
        return self.codes is not None

    def columns(self, idx) -> np.ndarray:
        return self.Y[:, idx]


@dataclass(frozen=True, eq=False)
class SparseDecoder:
    """Column-sparse M x N decoder stored in CSC form.

    Row indices within every column are sorted ascending. ``head_mask``
    (same length as ``values``) marks the entries of the cascade head U0;
    the remaining entries form U1.
    """

    M: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    order: Optional[int] = None
    sparsity: Optional[int] = None
    head_mask: Optional[np.ndarray] = None
    energy: Optional[float] = None

    @classmethod
    def from_columns(cls, M: int, columns: Sequence[tuple], **kw) -> "SparseDecoder":
        idx_lists, val_lists = [], []
        for idx, val in columns:
            idx = np.asarray(idx, dtype=np.int64)
            val = np.asarray(val, dtype=np.float64)
            o = np.argsort(idx, kind="stable")
            idx_lists.append(idx[o])
            val_lists.append(val[o])
        indptr, indices = _csr_from_lists(idx_lists)
        values = np.concatenate(val_lists) if val_lists else np.zeros(0)
        return cls(M, indptr, indices, values, **kw)

    @property
    def N(self) -> int:
        return len(self.indptr) - 1

    @property
    def shape(self) -> tuple:
        return (self.M, self.N)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def has_cascade(self) -> bool:
        return self.head_mask is not None

    def column(self, i: int):
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.values[a:b]

    def column_nnz(self) -> np.ndarray:
        return np.diff(self.indptr)

    def _csc(self, mask=None) -> sp.csc_matrix:
        if mask is None:
            return sp.csc_matrix((self.values, self.indices, self.indptr), shape=self.shape)
        col_of_entry = np.repeat(np.arange(self.N), np.diff(self.indptr))
        counts = np.bincount(col_of_entry[mask], minlength=self.N)
        ptr = np.zeros(self.N + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(counts)
        return sp.csc_matrix((self.values[mask], self.indices[mask], ptr), shape=self.shape)

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        return self._csc()

    @cached_property
    def head(self) -> sp.csc_matrix:
        return self._csc(self.head_mask)

    @cached_property
    def tail(self) -> sp.csc_matrix:
        return self._csc(~self.head_mask)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(eq=False)
class RankedResult:
    """Ranked (index, estimated similarity) pairs plus accounting counters."""

    indices: np.ndarray
    scores: np.ndarray
    suppressed: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    suppressed_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    measurements_count: int = 0
    decode_ops: int = 0

    @property
    def entries(self) -> list:
        return list(zip(self.indices.tolist(), self.scores.tolist()))

    def __len__(self) -> int:
        return int(self.indices.size)


def rank_scores(scores: np.ndarray, limit: Optional[int] = None, candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending index.

    ``candidates`` restricts ranking to a subset of indices; ``limit`` keeps
    only the best ``limit`` (ties at the cut are resolved exactly).
    """
    idx = np.arange(scores.size) if candidates is None else np.asarray(candidates, dtype=np.int64)
    s = scores if candidates is None else scores[idx]
    if limit is not None and limit < s.size:
        kth = np.partition(s, s.size - limit)[s.size - limit]
        keep = s >= kth
        idx, s = idx[keep], s[keep]
    order = np.lexsort((idx, -s))
    out = idx[order]
    return out if limit is None else out[:limit]
