"""Query-time engine: measurements, decoding, correction and cascade search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Assignment, MemoryBank, RankedResult, SparseDecoder, rank_scores, validate_query
from .errors import DimensionMismatch, InvalidParams, NoCascade, ShapeMismatch
from .index import Index
from .quantization import pq_measure


@dataclass(frozen=True)
class QueryParams:
    top_k: int = 10
    correction: bool = False
    shortlist: Optional[int] = None
    correction_depth: Optional[int] = None
    normalize_query: bool = False

    def depth(self) -> int:
        return self.top_k * 10 if self.correction_depth is None else self.correction_depth

    def shortlist_size(self, N: int) -> int:
        R = max(1000, N // 100) if self.shortlist is None else self.shortlist
        return min(R, N)

    def validate(self, cascade: bool = False) -> None:
        if self.top_k < 1:
            raise InvalidParams("top_k must be >= 1")
        if self.correction_depth is not None and self.correction_depth < 1:
            raise InvalidParams("correction depth must be >= 1")
        if cascade and self.shortlist is not None and self.shortlist < self.top_k:
            raise InvalidParams("shortlist must hold at least top_k entries")


def measure(bank: MemoryBank, query) -> np.ndarray:
    """Group measurements c = q^T Y (through lookup tables for a quantized bank)."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (bank.d,):
        raise DimensionMismatch(f"query must have shape ({bank.d},), got {q.shape}")
    if bank.quantized:
        return pq_measure(bank.quantizer, bank.codes, q)
    return bank.Y.T @ q


def decode(c, decoder: SparseDecoder) -> np.ndarray:
    """Estimated similarities s_hat = c U, touching only the non-zeros of U."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (decoder.M,):
        raise ShapeMismatch(f"measurements must have shape ({decoder.M},), got {c.shape}")
    return decoder.matrix.T @ c


def correct(ranked: RankedResult, assignment: Assignment, depth: Optional[int] = None) -> RankedResult:
    """Per-unit non-maxima suppression over a ranking.

    Walking the first ``depth`` positions, every entry not yet suppressed
    suppresses all entries that share a memory unit with it. Suppressed
    entries are dropped (relative order of the rest is kept) and reported in
    ``suppressed``.
    """
    idx = ranked.indices
    depth = idx.size if depth is None else min(depth, idx.size)
    ptr, nbrs = assignment.neighbors
    hit = np.zeros(assignment.N, dtype=bool)
    for pos in range(depth):
        i = idx[pos]
        if hit[i]:
            continue
        hit[nbrs[ptr[i]:ptr[i + 1]]] = True
        hit[i] = False
    drop = hit[idx]
    return RankedResult(idx[~drop], ranked.scores[~drop], idx[drop], ranked.scores[drop],
                        ranked.measurements_count, ranked.decode_ops)


def _finish(order: np.ndarray, scores: np.ndarray, assignment: Assignment, params: QueryParams,
            counters: tuple) -> RankedResult:
    if not params.correction:
        return RankedResult(order[:params.top_k], scores[order[:params.top_k]],
                            measurements_count=counters[0], decode_ops=counters[1])
    ranked = RankedResult(order, scores[order], measurements_count=counters[0], decode_ops=counters[1])
    out = correct(ranked, assignment, params.depth())
    keep = out.indices[:params.top_k]
    # report only suppressed entries that ranked above the last returned one
    gone = np.flatnonzero(~np.isin(order, out.indices))
    if keep.size:
        gone = gone[gone < np.flatnonzero(order == keep[-1])[0]]
    return RankedResult(keep, out.scores[:params.top_k], order[gone], scores[order[gone]],
                        counters[0], counters[1])


def _rank_for_output(scores: np.ndarray, assignment: Assignment, params: QueryParams,
                     counters: tuple, candidates: Optional[np.ndarray] = None) -> RankedResult:
    total = scores.size if candidates is None else candidates.size
    if not params.correction:
        order = rank_scores(scores, params.top_k, candidates)
        return _finish(order, scores, assignment, params, counters)
    # grow the ranked prefix until enough entries survive suppression
    size = min(total, 2 * max(params.depth(), params.top_k))
    while True:
        order = rank_scores(scores, size, candidates)
        res = _finish(order, scores, assignment, params, counters)
        if len(res) >= params.top_k or size >= total:
            return res
        size = min(total, 4 * size)


def query(index: Index, q, params: QueryParams = QueryParams()) -> RankedResult:
    """measure -> decode -> rank -> optional correction -> top_k."""
    params.validate()
    q = validate_query(q, index.d, params.normalize_query)
    c = measure(index.bank, q)
    s = decode(c, index.decoder)
    counters = (index.M * index.d, index.decoder.nnz)
    return _rank_for_output(s, index.assignment, params, counters)


def query_cascade(index: Index, q, params: QueryParams = QueryParams()) -> RankedResult:
    """Rough scores from U0 over all vectors, then U1 refinement on the shortlist only."""
    dec = index.decoder
    if not dec.has_cascade:
        raise NoCascade("index decoder has no cascade split")
    params.validate(cascade=True)
    q = validate_query(q, index.d, params.normalize_query)
    c = measure(index.bank, q)
    rough = dec.head.T @ c
    R = rank_scores(rough, params.shortlist_size(index.N))
    tail = dec.tail[:, R]
    scores = np.full(index.N, -np.inf)
    scores[R] = rough[R] + tail.T @ c
    counters = (index.M * index.d, int(dec.head.nnz) + int(tail.nnz))
    return _rank_for_output(scores, index.assignment, params, counters, candidates=R)


def search(index: Index, q, params: QueryParams = QueryParams()) -> RankedResult:
    """Cascade search when the index carries a split decoder, plain search otherwise."""
    if index.decoder.has_cascade:
        return query_cascade(index, q, params)
    return query(index, q, params)
