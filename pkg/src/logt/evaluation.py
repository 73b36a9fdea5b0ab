"""Retrieval metrics and the evaluation protocol."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import Dataset, exhaustive_similarities, rank_scores
from .errors import EmptyRelevant, InvalidParams
from .index import Index, batch_build, build_index  # noqa: F401  (re-exported build entry points)
from .search import QueryParams, search


@dataclass(frozen=True)
class GroundTruth:
    """Per-query relevant index sets, with optional junk sets to ignore."""

    relevant: List[np.ndarray]
    ignore: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.ignore and len(self.ignore) != len(self.relevant):
            raise InvalidParams("ignore lists must match relevant lists one-to-one")

    @property
    def num_queries(self) -> int:
        return len(self.relevant)

    def ignore_for(self, qi: int) -> np.ndarray:
        return self.ignore[qi] if self.ignore else np.zeros(0, np.int64)

    def validate(self, N: int) -> None:
        for qi, rel in enumerate(self.relevant):
            ign = self.ignore_for(qi)
            for arr in (rel, ign):
                if arr.size and (arr.min() < 0 or arr.max() >= N):
                    raise InvalidParams(f"query {qi}: ground-truth index outside [0, {N})")
            if np.intersect1d(rel, ign).size:
                raise InvalidParams(f"query {qi}: an index is both relevant and ignored")


def average_precision(ranking: Sequence[int], relevant, ignore=()) -> float:
    """Non-interpolated AP: mean over relevant items of precision at their rank.

    Ignored items are removed from the ranking first; relevant items missing
    from the ranking contribute zero.
    """
    relevant = set(np.asarray(relevant, dtype=np.int64).tolist())
    if not relevant:
        raise EmptyRelevant("average precision is undefined without relevant items")
    ignore = set(np.asarray(ignore, dtype=np.int64).tolist())
    hits = 0
    total = 0.0
    rank = 0
    for item in ranking:
        if item in ignore:
            continue
        rank += 1
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def complexity_ratio(M: int, d: int, s: float, N: int) -> float:
    """rho = (M d + s) / (d N): scalar multiply-adds relative to exhaustive search."""
    if d * N == 0:
        raise InvalidParams("d * N must be positive")
    if min(M, d, s, N) < 0:
        raise InvalidParams("counts must be non-negative")
    return (M * d + s) / (d * N)


def predicted_ratio(index: Index) -> float:
    """rho of plain (non-cascade) decoding, from the stored decoder."""
    return complexity_ratio(index.M, index.d, index.decoder.nnz, index.N)


@dataclass
class EvalReport:
    name: str
    mAP: float
    rho: float
    per_query_ap: np.ndarray
    skipped: List[int]
    timings: Dict[str, float]

    def summary(self) -> str:
        return (f"{self.name}: mAP={100 * self.mAP:.2f} rho={self.rho:.4f} "
                f"queries={self.per_query_ap.size} skipped={len(self.skipped)}")


def _score_queries(rankings, gt: GroundTruth):
    aps, skipped = [], []
    for qi, ranking in enumerate(rankings):
        try:
            aps.append(average_precision(ranking, gt.relevant[qi], gt.ignore_for(qi)))
        except EmptyRelevant:
            skipped.append(qi)
    aps = np.asarray(aps)
    return (float(aps.mean()) if aps.size else float("nan")), aps, skipped


def evaluate(index: Index, queries: np.ndarray, gt: GroundTruth, params: QueryParams = QueryParams(top_k=100),
             name: str = "index", baseline: Optional[Dataset] = None) -> EvalReport:
    """Run every query (cascade when available), aggregate mAP and measured rho.

    ``queries`` holds one query per column. With ``baseline`` the mean wall
    time of exhaustive search over that dataset is measured too, giving a
    time-based ratio next to the operation-count ratio.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.shape[1] != gt.num_queries:
        raise InvalidParams(f"{queries.shape[1]} queries but ground truth for {gt.num_queries}")
    gt.validate(index.N)
    rankings, ops = [], []
    t0 = time.perf_counter()
    for qi in range(queries.shape[1]):
        res = search(index, queries[:, qi], params)
        rankings.append(res.indices)
        ops.append(res.measurements_count + res.decode_ops)
    elapsed = time.perf_counter() - t0
    mAP, aps, skipped = _score_queries(rankings, gt)
    rho = float(np.mean(ops)) / (index.d * index.N)
    timings = {"total_s": elapsed, "mean_query_s": elapsed / max(1, queries.shape[1])}
    if baseline is not None:
        t0 = time.perf_counter()
        for qi in range(queries.shape[1]):
            rank_scores(exhaustive_similarities(baseline, queries[:, qi]), params.top_k)
        exh = (time.perf_counter() - t0) / max(1, queries.shape[1])
        timings["exhaustive_mean_query_s"] = exh
        timings["time_ratio"] = timings["mean_query_s"] / exh if exh > 0 else float("nan")
    return EvalReport(name, mAP, rho, aps, skipped, timings)


def exhaustive_rankings(dataset: Dataset, queries: np.ndarray, top_k: int) -> List[np.ndarray]:
    return [rank_scores(exhaustive_similarities(dataset, queries[:, qi]), top_k) for qi in range(queries.shape[1])]


def evaluate_exhaustive(dataset: Dataset, queries: np.ndarray, gt: GroundTruth, top_k: int = 100,
                        name: str = "oracle") -> EvalReport:
    """Baseline: brute-force inner products, rho = 1 by construction."""
    queries = np.asarray(queries, dtype=np.float64)
    gt.validate(dataset.N)
    t0 = time.perf_counter()
    rankings = exhaustive_rankings(dataset, queries, top_k)
    elapsed = time.perf_counter() - t0
    mAP, aps, skipped = _score_queries(rankings, gt)
    return EvalReport(name, mAP, 1.0, aps, skipped,
                      {"total_s": elapsed, "mean_query_s": elapsed / max(1, queries.shape[1])})
