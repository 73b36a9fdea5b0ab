"""Local sparse decoders.

Every column u_i of the decoder is fitted independently so that
``x_i ~= Y[:, S] @ u_i[S]`` where the support S is read off the assignment
graph around vector i. Only the memory vectors indexed by the support are
touched, so columns can be built batch by batch or in parallel.

Sparsity is controlled by the number of OMP atoms L; no l1 weight is ever
formed.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .core import Assignment, Dataset, MemoryBank, SparseDecoder
from .errors import EmptySupport, IndexOutOfRange, InvalidParams

DEFAULT_SUPPORT_CAP = 4096
DEFAULT_RESIDUAL_TOL = 1e-6

Column = Tuple[np.ndarray, np.ndarray]


def _gather(ptr: np.ndarray, flat: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Concatenate the CSR rows ``rows`` of (ptr, flat), in order."""
    starts = ptr[rows]
    lens = ptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return flat[:0]
    offs = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return flat[offs + np.arange(total)]


def _check_index(assignment: Assignment, i: int) -> None:
    if not 0 <= i < assignment.N:
        raise IndexOutOfRange(f"vector {i} outside [0, {assignment.N})")


def support_order0(assignment: Assignment, i: int) -> np.ndarray:
    """Units containing vector i."""
    _check_index(assignment, i)
    return assignment.units_of(i).copy()


def support_order1(assignment: Assignment, i: int, cap: Optional[int] = DEFAULT_SUPPORT_CAP) -> np.ndarray:
    """Units within three edges of vector i in the vector/unit graph.

    If more than ``cap`` units are reachable, the first ``cap`` in discovery
    order are kept (own units first). Returned sorted ascending.
    """
    _check_index(assignment, i)
    own = assignment.units_of(i)
    vptr, vunits = assignment._vector_csr
    co = _gather(assignment.unit_ptr, assignment.unit_members, own)
    seq = np.concatenate([own, _gather(vptr, vunits, co)])
    uniq, first = np.unique(seq, return_index=True)
    if cap is not None and uniq.size > cap:
        uniq = uniq[np.argsort(first, kind="stable")[:cap]]
    return np.sort(uniq)


def _least_squares(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A u ~= x``.

    QR of A for full column rank, QR of A^T for full row rank (the
    underdetermined case), SVD otherwise.
    """
    d, k = A.shape
    tol = max(d, k) * np.finfo(np.float64).eps
    if k <= d:
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        if diag.min() > tol * diag.max():
            return solve_triangular(R, Q.T @ x)
    else:
        Q, R = np.linalg.qr(A.T)
        diag = np.abs(np.diag(R))
        if diag.min() > tol * diag.max():
            return Q @ solve_triangular(R, x, trans="T")
    return np.linalg.lstsq(A, x, rcond=None)[0]


def solve_local_decoder(bank: MemoryBank, dataset: Dataset, i: int, support) -> Column:
    """Dense least-squares fit of x_i on the memory vectors in ``support``."""
    S = np.asarray(support, dtype=np.int64)
    if S.size == 0:
        raise EmptySupport(f"empty support for vector {i}")
    return S, _least_squares(bank.columns(S), dataset.column(i))


def _omp_batch(atoms: np.ndarray, x: np.ndarray, limits: np.ndarray, residual_tol: float) -> List[np.ndarray]:
    """OMP for a stack of problems sharing one code path.

    ``atoms`` is ``(B, d, s)`` (unused trailing atoms are zero), ``x`` is
    ``(B, d)``, ``limits`` the per-problem atom budget. Returns, per problem,
    the selected atom positions in selection order followed by their
    least-squares coefficients.
    """
    B, d, s = atoms.shape
    rows = np.arange(B)
    norms = np.linalg.norm(atoms, axis=1)
    # selection weight 1/||atom||; zeroed once an atom is used or if it is null
    weight = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    cap = np.minimum(limits, d)
    Q = np.zeros((B, d, int(cap.max())))
    chosen = np.zeros((B, Q.shape[2]), dtype=np.int64)
    count = np.zeros(B, dtype=np.int64)
    r = x.copy()
    active = (count < cap) & (np.linalg.norm(r, axis=1) >= residual_tol)
    while active.any():
        score = np.matmul(r[:, None, :], atoms)[:, 0, :]
        np.abs(score, out=score)
        score *= weight
        j = np.argmax(score, axis=1)
        active &= score[rows, j] > 0.0
        t = rows[active]
        jt = j[t]
        weight[t, jt] = 0.0
        a = atoms[t, :, jt]
        Qt = Q if t.size == B else Q[t]
        v = a - np.matmul(Qt, np.matmul(a[:, None, :], Qt).transpose(0, 2, 1))[:, :, 0]
        v -= np.matmul(Qt, np.matmul(v[:, None, :], Qt).transpose(0, 2, 1))[:, :, 0]
        rho = np.linalg.norm(v, axis=1)
        # numerically dependent atoms are discarded without being selected
        ok = rho > 1e-10 * norms[t, jt]
        t, jt, v, rho = t[ok], jt[ok], v[ok], rho[ok]
        q = v / rho[:, None]
        Q[t, :, count[t]] = q
        chosen[t, count[t]] = jt
        count[t] += 1
        r[t] -= np.einsum("bd,bd->b", q, r[t])[:, None] * q
        active &= count < cap
        active[t] &= np.einsum("bd,bd->b", r[t], r[t]) >= residual_tol ** 2
    out = []
    for b in range(B):
        k = int(count[b])
        sel = chosen[b, :k]
        Qk = Q[b, :, :k]
        R = np.triu(Qk.T @ atoms[b][:, sel])
        out.append((sel, solve_triangular(R, Qk.T @ x[b]) if k else np.zeros(0)))
    return out


def solve_omp_decoder(bank: MemoryBank, dataset: Dataset, i: int, support, L: int,
                      residual_tol: float = DEFAULT_RESIDUAL_TOL) -> Column:
    """Orthogonal Matching Pursuit over the atoms ``Y[:, support]``.

    Atoms are ranked by |correlation with the residual| divided by their
    norm. Stops after L atoms or once the residual norm drops below
    ``residual_tol``. Atoms numerically dependent on those already chosen
    are skipped.
    """
    S = np.asarray(support, dtype=np.int64)
    if S.size == 0:
        raise EmptySupport(f"empty support for vector {i}")
    if L < 1 or L > S.size:
        raise InvalidParams(f"L must be in [1, {S.size}], got {L}")
    A = bank.columns(S)
    sel, coef = _omp_batch(A[None], dataset.column(i)[None], np.array([L]), residual_tol)[0]
    return S[sel], coef


def _omp_columns(bank, dataset, vectors, supports, L, residual_tol):
    smax = max(S.size for S in supports)
    atoms = np.zeros((len(vectors), dataset.d, smax))
    for b, S in enumerate(supports):
        atoms[b, :, :S.size] = bank.columns(S)
    x = dataset.columns(np.asarray(vectors)).T
    limits = np.array([min(L, S.size) for S in supports])
    return [(S[sel], coef) for S, (sel, coef) in zip(supports, _omp_batch(atoms, x, limits, residual_tol))]


def build_decoder(bank: MemoryBank, dataset: Dataset, assignment: Assignment, order: int = 1,
                  L: Optional[int] = None, support_cap: Optional[int] = DEFAULT_SUPPORT_CAP,
                  residual_tol: float = DEFAULT_RESIDUAL_TOL, batch_bytes: int = 8 << 20) -> SparseDecoder:
    """Fit every decoder column on its order-0 or order-1 local support.

    Without ``L`` each column is the dense least-squares solution on its
    support; with ``L`` it is the OMP solution with at most ``min(L, |S|)``
    non-zeros. OMP columns are solved in stacks of roughly ``batch_bytes``.
    """
    if order not in (0, 1):
        raise InvalidParams(f"decoder order must be 0 or 1, got {order}")
    if L is not None and L < 1:
        raise InvalidParams(f"L must be >= 1, got {L}")
    if bank.M != assignment.M or dataset.N != assignment.N:
        raise InvalidParams("memory bank, dataset and assignment disagree on M or N")

    def support(i):
        return support_order0(assignment, i) if order == 0 else support_order1(assignment, i, support_cap)

    if L is None:
        columns = [solve_local_decoder(bank, dataset, i, support(i)) for i in range(assignment.N)]
        return SparseDecoder.from_columns(assignment.M, columns, order=order, sparsity=None)

    columns = []
    pending, supports, budget = [], [], 0
    for i in range(assignment.N):
        S = support(i)
        pending.append(i)
        supports.append(S)
        budget = max(budget, S.size)
        if len(pending) * budget * dataset.d * 8 >= batch_bytes or i == assignment.N - 1:
            columns.extend(_omp_columns(bank, dataset, pending, supports, L, residual_tol))
            pending, supports, budget = [], [], 0
    return SparseDecoder.from_columns(assignment.M, columns, order=order, sparsity=L)


def cascade_split(decoder: SparseDecoder, p: float) -> SparseDecoder:
    """Split U into a head U0 carrying a fraction ``p`` of each column's energy and a tail U1.

    Entries are taken by decreasing magnitude (ties by unit index) until the
    squared sum reaches ``p * ||u_i||^2``. Values are not modified, so
    U0 + U1 == U exactly.
    """
    if decoder.has_cascade:
        raise InvalidParams("decoder already has a cascade split")
    if not 0.0 < p <= 1.0:
        raise InvalidParams(f"energy fraction p must be in (0, 1], got {p}")
    mask = np.zeros(decoder.nnz, dtype=bool)
    for i in range(decoder.N):
        a, b = decoder.indptr[i], decoder.indptr[i + 1]
        if a == b:
            continue
        if p >= 1.0:
            mask[a:b] = True
            continue
        idx, val = decoder.indices[a:b], decoder.values[a:b]
        order = np.lexsort((idx, -np.abs(val)))
        energy = np.cumsum(val[order] ** 2)
        keep = min(int(np.searchsorted(energy, p * energy[-1], side="left")) + 1, order.size)
        mask[a + order[:keep]] = True
    return SparseDecoder(decoder.M, decoder.indptr, decoder.indices, decoder.values, decoder.order,
                         decoder.sparsity, mask, p)


def baseline_decoder_gt(assignment: Assignment) -> SparseDecoder:
    """U = G^T: weight 1 on every unit that holds the vector."""
    ptr, units = assignment._vector_csr
    return SparseDecoder(assignment.M, ptr.copy(), units.copy(), np.ones(units.size), order=0)
