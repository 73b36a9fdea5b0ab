"""Index bundle and the build pipeline (single pass or batch by batch)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import Assignment, Dataset, MemoryBank, SparseDecoder, concat_assignments, validate_dataset
from .decoding import DEFAULT_SUPPORT_CAP, build_decoder, cascade_split
from .encoding import encode
from .errors import InvalidParams
from .grouping import DEFAULT_CHUNK_FACTOR, orthogonal_assignment, random_assignment
from .quantization import ProductQuantizer, pq_encode, pq_train


@dataclass(frozen=True)
class BuildParams:
    n: int = 50
    m: int = 4
    strategy: str = "orthogonal"
    chunk_factor: int = DEFAULT_CHUNK_FACTOR
    encoder: str = "pinv"
    order: int = 1
    omp_L: Optional[int] = 300
    cascade_p: Optional[float] = None
    pq_m: Optional[int] = None
    pq_iters: int = 25
    seed: Optional[int] = 0
    support_cap: Optional[int] = DEFAULT_SUPPORT_CAP
    float32: bool = True

    def validate(self) -> None:
        if self.strategy not in ("random", "orthogonal"):
            raise InvalidParams(f"unknown strategy {self.strategy!r}")
        if self.encoder not in ("sum", "pinv"):
            raise InvalidParams(f"unknown encoder {self.encoder!r}")
        if self.order not in (0, 1):
            raise InvalidParams(f"decoder order must be 0 or 1, got {self.order}")
        if self.omp_L is not None and self.omp_L < 1:
            raise InvalidParams("omp_L must be >= 1")
        if self.cascade_p is not None and not 0.0 < self.cascade_p <= 1.0:
            raise InvalidParams("cascade_p must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class Index:
    """Everything needed to answer queries; dataset vectors are not kept."""

    assignment: Assignment
    bank: MemoryBank
    decoder: SparseDecoder
    params: BuildParams = field(default_factory=BuildParams)
    build_info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.assignment.N

    @property
    def M(self) -> int:
        return self.assignment.M

    @property
    def d(self) -> int:
        return self.bank.d

    def replace(self, **changes) -> "Index":
        return dataclasses.replace(self, **changes)


def _round32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _assign(dataset: Dataset, p: BuildParams, seed) -> Assignment:
    if p.strategy == "random":
        return random_assignment(dataset.N, p.n, p.m, seed)
    return orthogonal_assignment(dataset, p.n, p.m, p.chunk_factor, seed)


def _build_part(dataset: Dataset, p: BuildParams, seed, pq: Optional[ProductQuantizer]):
    assignment = _assign(dataset, p, seed)
    bank = encode(dataset, assignment, p.encoder)
    Y = bank.Y
    codes = None
    if p.pq_m is not None:
        if pq is None:
            pq = pq_train(Y, p.pq_m, seed=seed, iters=p.pq_iters)
            if p.float32:
                pq = pq.with_codebooks(_round32(pq.codebooks))
        codes = pq_encode(pq, Y)
        Y = pq.decode(codes)
    elif p.float32:
        Y = _round32(Y)
    bank = MemoryBank(np.asfortranarray(Y), bank.construction, pq if codes is not None else None, codes)
    # with PQ the decoder is fitted against the reconstructed vectors
    decoder = build_decoder(bank, dataset, assignment, p.order, p.omp_L, p.support_cap)
    if p.float32:
        decoder = dataclasses.replace(decoder, values=_round32(decoder.values))
    if p.cascade_p is not None:
        decoder = cascade_split(decoder, p.cascade_p)
    return assignment, bank, decoder, pq


def _finalize(assignment: Assignment, bank: MemoryBank, decoder: SparseDecoder, p: BuildParams, info: dict) -> Index:
    if p.float32:
        bank = dataclasses.replace(bank, Y=np.asfortranarray(bank.Y, dtype=np.float32))
        decoder = dataclasses.replace(decoder, values=decoder.values.astype(np.float32))
    assignment.neighbors  # co-membership lists used by correction
    return Index(assignment, bank, decoder, p, info)


def build_index(dataset: Dataset, params: BuildParams = BuildParams()) -> Index:
    """Group, encode and fit the decoder for a whole resident dataset.

    Computation is float64; with ``params.float32`` the memory vectors and
    decoder weights are rounded to float32 (the precision they are persisted
    in) before use, so saved indexes answer queries bit-identically.
    """
    params.validate()
    assignment, bank, decoder, _ = _build_part(dataset, params, params.seed, None)
    return _finalize(assignment, bank, decoder, params, {"batches": 1, "peak_resident_vectors": dataset.N})


def concat_decoders(parts) -> SparseDecoder:
    """Block-diagonal concatenation of per-batch decoders."""
    M_off = 0
    ptrs, idx, vals, masks = [np.zeros(1, np.int64)], [], [], []
    nnz_off = 0
    for dec in parts:
        ptrs.append(dec.indptr[1:] + nnz_off)
        idx.append(dec.indices + M_off)
        vals.append(dec.values)
        if dec.head_mask is not None:
            masks.append(dec.head_mask)
        M_off += dec.M
        nnz_off += dec.nnz
    first = parts[0]
    head_mask = np.concatenate(masks) if masks else None
    return SparseDecoder(M_off, np.concatenate(ptrs), np.concatenate(idx), np.concatenate(vals),
                         first.order, first.sparsity, head_mask, first.energy)


def batch_build(batches: Iterable, params: BuildParams = BuildParams(), normalize: bool = False) -> Index:
    """Build an index from a stream of dataset batches, one batch resident at a time.

    Batch b is grouped, encoded and decoded on its own (seed ``seed + b``);
    the per-batch memory vectors and decoders are then concatenated with
    unit and vector indices offset. With PQ, the quantizer learned on the
    first batch is reused for the following ones.
    """
    params.validate()
    assignments, banks, decoders = [], [], []
    pq = None
    peak = 0
    count = 0
    # plain iteration: enumerate() would keep the previous batch referenced
    for batch in batches:
        ds = batch if isinstance(batch, Dataset) else validate_dataset(batch, normalize=normalize)
        del batch
        peak = max(peak, ds.N)
        seed = None if params.seed is None else params.seed + count
        assignment, bank, decoder, pq = _build_part(ds, params, seed, pq)
        del ds
        assignments.append(assignment)
        banks.append(bank)
        decoders.append(decoder)
        count += 1
    if not count:
        raise InvalidParams("no batches supplied")
    assignment = concat_assignments(assignments)
    Y = np.asfortranarray(np.hstack([bk.Y for bk in banks]))
    codes = np.vstack([bk.codes for bk in banks]) if pq is not None else None
    bank = MemoryBank(Y, banks[0].construction, pq, codes)
    info = {"batches": count, "peak_resident_vectors": peak}
    return _finalize(assignment, bank, concat_decoders(decoders), params, info)
