"""Vector files, ground truth, result CSVs and the LOGT index format.

LOGT layout (all little-endian)::

    b"LOGT"  u16 version  u16 reserved(0)
    section*  where section = tag[4] u64 length payload[length] u32 crc32(payload)

Sections, in this order:

    HEAD  fixed header, see ``_HEAD``
    ASGN  u32 unit sizes[M], then per unit the first member followed by
          successive differences (u32)
    MEMB  dense memory vectors, column-major (d*M float32, or float64 when
          the index was built without float32 storage)      -- dense bank only
    PQCB  codebooks (m_pq*256*d_sub floats, same precision rule)  -- PQ only
    PQCD  codes (M*m_pq u8, row-major)                             -- PQ only
    DECO  u64 indptr[N+1], u32 row indices[nnz], values[nnz]
    CASC  u8 head mask[nnz]                                    -- cascade only
    ENDS  empty

Co-membership lists are rebuilt on load from the assignment.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .core import Assignment, AssignmentParams, MemoryBank, RankedResult, SparseDecoder
from .errors import ChecksumFailure, MalformedFile, VersionMismatch
from .evaluation import EvalReport, GroundTruth
from .index import BuildParams, Index
from .quantization import ProductQuantizer

MAGIC = b"LOGT"
FORMAT_VERSION = 1

_VEC_DTYPES = {"fvecs": np.dtype("<f4"), "bvecs": np.dtype("u1")}

# d N M n m chunk_factor batches | strategy encoder order flags | omp_L support_cap sparsity
# | cascade_p energy | seed | pq_m pq_iters | nnz
_HEAD = struct.Struct("<7I4B3i2dq2IQ")
_F_FLOAT32, _F_PQ, _F_CASCADE, _F_SEED = 1, 2, 4, 8
_STRATEGIES = ("random", "orthogonal")
_ENCODERS = ("sum", "pinv")


# ---------------------------------------------------------------- vector files

def vecs_format(path) -> str:
    suffix = Path(path).suffix.lstrip(".").lower()
    if suffix not in _VEC_DTYPES:
        raise MalformedFile(f"cannot infer vector format from {path!s}; expected .fvecs or .bvecs")
    return suffix


def read_vecs(path, fmt: Optional[str] = None) -> np.ndarray:
    """Read an fvecs/bvecs file into a ``(dim, count)`` float64 matrix."""
    fmt = fmt or vecs_format(path)
    if fmt not in _VEC_DTYPES:
        raise MalformedFile(f"unknown vector format {fmt!r}")
    vt = _VEC_DTYPES[fmt]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < 4:
        raise MalformedFile(f"{path!s}: no complete record")
    dim = int(raw[:4].view("<i4")[0])
    if dim <= 0:
        raise MalformedFile(f"{path!s}: invalid dimension {dim}")
    rec = 4 + dim * vt.itemsize
    if raw.size % rec:
        raise MalformedFile(f"{path!s}: truncated record or inconsistent dimensions")
    rows = raw.reshape(-1, rec)
    dims = rows[:, :4].copy().view("<i4").ravel()
    if np.any(dims != dim):
        bad = int(np.flatnonzero(dims != dim)[0])
        raise MalformedFile(f"{path!s}: record {bad} has dimension {dims[bad]}, expected {dim}")
    values = rows[:, 4:].copy().view(vt)
    return np.asfortranarray(values.T.astype(np.float64))


def write_vecs(path, matrix: np.ndarray, fmt: Optional[str] = None) -> None:
    """Write the columns of ``matrix`` as fvecs/bvecs records."""
    fmt = fmt or vecs_format(path)
    vt = _VEC_DTYPES[fmt]
    cols = np.asarray(matrix).T
    if fmt == "bvecs" and (cols.min(initial=0) < 0 or cols.max(initial=0) > 255):
        raise MalformedFile("bvecs values must lie in [0, 255]")
    count, dim = cols.shape
    out = np.empty((count, 4 + dim * vt.itemsize), dtype=np.uint8)
    out[:, :4] = np.full((count, 1), dim, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(cols.astype(vt)).view(np.uint8)
    out.tofile(path)


# ---------------------------------------------------------------- ground truth

def _ids(field: str) -> np.ndarray:
    return np.array(sorted({int(t) for t in field.replace(",", " ").split()}), dtype=np.int64)


def read_ground_truth(path, num_queries: Optional[int] = None) -> GroundTruth:
    """Lines ``query_id | relevant ids | ignore ids``; '#' starts a comment.

    Queries without a line get empty sets (and are skipped by evaluation).
    """
    rel, ign = {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("|")
            if len(parts) not in (2, 3):
                raise MalformedFile(f"{path!s}:{lineno}: expected 'query_id | relevant | ignore'")
            try:
                qid = int(parts[0])
                rel[qid] = _ids(parts[1])
                ign[qid] = _ids(parts[2]) if len(parts) == 3 else np.zeros(0, np.int64)
            except ValueError as exc:
                raise MalformedFile(f"{path!s}:{lineno}: {exc}") from None
            if qid < 0:
                raise MalformedFile(f"{path!s}:{lineno}: negative query id")
    count = (max(rel) + 1 if rel else 0) if num_queries is None else num_queries
    empty = np.zeros(0, np.int64)
    return GroundTruth([rel.get(q, empty) for q in range(count)], [ign.get(q, empty) for q in range(count)])


def write_ground_truth(path, gt: GroundTruth) -> None:
    with open(path, "w") as fh:
        for qi in range(gt.num_queries):
            rel = " ".join(map(str, gt.relevant[qi]))
            ign = " ".join(map(str, gt.ignore_for(qi)))
            fh.write(f"{qi} | {rel} | {ign}\n")


# ---------------------------------------------------------------- CSV outputs

RESULT_FIELDS = ("query_id", "rank", "vector_id", "score", "suppressed_flag")
REPORT_FIELDS = ("method", "queries", "skipped", "mAP", "rho", "mean_query_s")


def write_results_csv(path, results: Iterable[RankedResult]) -> None:
    """Returned entries get ranks 1..k; suppressed entries follow with flag 1 and rank 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for qid, res in enumerate(results):
            for rank, (i, s) in enumerate(zip(res.indices, res.scores), 1):
                w.writerow((qid, rank, int(i), repr(float(s)), 0))
            for i, s in zip(res.suppressed, res.suppressed_scores):
                w.writerow((qid, 0, int(i), repr(float(s)), 1))


def read_results_csv(path) -> List[np.ndarray]:
    """Returned rankings per query id (suppressed rows are dropped)."""
    ranked = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["suppressed_flag"]):
                continue
            ranked.setdefault(int(row["query_id"]), []).append((int(row["rank"]), int(row["vector_id"])))
    count = max(ranked) + 1 if ranked else 0
    return [np.array([v for _, v in sorted(ranked.get(q, []))], dtype=np.int64) for q in range(count)]


def write_report_csv(path, reports: Iterable[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in reports:
            w.writerow((r.name, r.per_query_ap.size + len(r.skipped), len(r.skipped),
                        f"{r.mAP:.6f}", f"{r.rho:.6f}", f"{r.timings.get('mean_query_s', float('nan')):.6g}"))


# ---------------------------------------------------------------- index files

def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def _encode_members(a: Assignment) -> bytes:
    deltas = np.diff(a.unit_members, prepend=0)
    starts = a.unit_ptr[:-1][a.unit_sizes > 0]
    deltas[starts] = a.unit_members[starts]
    return a.unit_sizes.astype("<u4").tobytes() + deltas.astype("<u4").tobytes()


def _decode_members(payload: bytes, M: int) -> Tuple[np.ndarray, np.ndarray]:
    sizes = np.frombuffer(payload, "<u4", M).astype(np.int64)
    stream = np.frombuffer(payload, "<u4", offset=4 * M).astype(np.int64)
    if stream.size != sizes.sum():
        raise MalformedFile("assignment section size mismatch")
    ptr = np.zeros(M + 1, np.int64)
    ptr[1:] = np.cumsum(sizes)
    running = np.cumsum(stream)
    before = np.concatenate(([0], running))[ptr[:-1]]
    return ptr, running - np.repeat(before, sizes)


def save_index(index: Index, path) -> None:
    p = index.params
    dec = index.decoder
    bank = index.bank
    ft = np.dtype("<f4") if p.float32 else np.dtype("<f8")
    flags = ((_F_FLOAT32 if p.float32 else 0) | (_F_PQ if bank.quantized else 0)
             | (_F_CASCADE if dec.has_cascade else 0) | (_F_SEED if p.seed is not None else 0))
    head = _HEAD.pack(
        index.d, index.N, index.M, p.n, p.m, p.chunk_factor, index.build_info.get("batches", 1),
        _STRATEGIES.index(p.strategy), _ENCODERS.index(p.encoder), p.order, flags,
        -1 if p.omp_L is None else p.omp_L, -1 if p.support_cap is None else p.support_cap,
        -1 if dec.sparsity is None else dec.sparsity,
        math.nan if p.cascade_p is None else p.cascade_p, math.nan if dec.energy is None else dec.energy,
        0 if p.seed is None else p.seed, 0 if p.pq_m is None else p.pq_m, p.pq_iters, dec.nnz)
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, 0), _section(b"HEAD", head),
             _section(b"ASGN", _encode_members(index.assignment))]
    if bank.quantized:
        parts.append(_section(b"PQCB", np.ascontiguousarray(bank.quantizer.codebooks, dtype=ft).tobytes()))
        parts.append(_section(b"PQCD", np.ascontiguousarray(bank.codes, dtype=np.uint8).tobytes()))
    else:
        parts.append(_section(b"MEMB", np.asarray(bank.Y, dtype=ft).tobytes(order="F")))
    parts.append(_section(b"DECO", dec.indptr.astype("<u8").tobytes() + dec.indices.astype("<u4").tobytes()
                          + dec.values.astype(ft).tobytes()))
    if dec.has_cascade:
        parts.append(_section(b"CASC", dec.head_mask.astype(np.uint8).tobytes()))
    parts.append(_section(b"ENDS", b""))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _read_sections(buf: bytes) -> dict:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise MalformedFile("not a LOGT index file")
    version = struct.unpack_from("<H", buf, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"index format version {version}, this library reads {FORMAT_VERSION}")
    pos, sections = 8, {}
    while pos < len(buf):
        if pos + 12 > len(buf):
            raise MalformedFile("truncated section header")
        tag = buf[pos:pos + 4]
        (length,) = struct.unpack_from("<Q", buf, pos + 4)
        end = pos + 12 + length
        if end + 4 > len(buf):
            raise MalformedFile(f"section {tag!r} runs past end of file")
        payload = buf[pos + 12:end]
        (crc,) = struct.unpack_from("<I", buf, end)
        if zlib.crc32(payload) != crc:
            raise ChecksumFailure(f"checksum mismatch in section {tag.decode('ascii', 'replace')}")
        sections[tag] = payload
        pos = end + 4
        if tag == b"ENDS":
            break
    if b"ENDS" not in sections:
        raise MalformedFile("index file is truncated")
    return sections


def load_index(path) -> Index:
    with open(path, "rb") as fh:
        sections = _read_sections(fh.read())
    try:
        head = _HEAD.unpack(sections[b"HEAD"])
    except (KeyError, struct.error):
        raise MalformedFile("missing or malformed header section") from None
    (d, N, M, n, m, chunk_factor, batches, strategy, encoder, order, flags,
     omp_L, support_cap, sparsity, cascade_p, energy, seed, pq_m, pq_iters, nnz) = head
    ft = np.dtype("<f4") if flags & _F_FLOAT32 else np.dtype("<f8")
    params = BuildParams(
        n=n, m=m, strategy=_STRATEGIES[strategy], chunk_factor=chunk_factor, encoder=_ENCODERS[encoder],
        order=order, omp_L=None if omp_L < 0 else omp_L, cascade_p=None if math.isnan(cascade_p) else cascade_p,
        pq_m=pq_m if flags & _F_PQ else None, pq_iters=pq_iters, seed=seed if flags & _F_SEED else None,
        support_cap=None if support_cap < 0 else support_cap, float32=bool(flags & _F_FLOAT32))
    try:
        ptr, members = _decode_members(sections[b"ASGN"], M)
        assignment = Assignment(N, ptr, members, AssignmentParams(
            n, m, params.seed, params.strategy, chunk_factor if params.strategy == "orthogonal" else 1))
        if flags & _F_PQ:
            books = np.frombuffer(sections[b"PQCB"], ft).reshape(pq_m, -1, d // pq_m)
            codes = np.frombuffer(sections[b"PQCD"], np.uint8).reshape(M, pq_m)
            pq = ProductQuantizer(books, params.seed, pq_iters)
            bank = MemoryBank(np.asfortranarray(pq.decode(codes), dtype=ft), _ENCODERS[encoder], pq, codes)
        else:
            Y = np.frombuffer(sections[b"MEMB"], ft).reshape((d, M), order="F")
            bank = MemoryBank(Y, _ENCODERS[encoder])
        raw = sections[b"DECO"]
        indptr = np.frombuffer(raw, "<u8", N + 1).astype(np.int64)
        indices = np.frombuffer(raw, "<u4", nnz, offset=8 * (N + 1)).astype(np.int64)
        values = np.frombuffer(raw, ft, nnz, offset=8 * (N + 1) + 4 * nnz)
        head_mask = np.frombuffer(sections[b"CASC"], np.uint8).astype(bool) if flags & _F_CASCADE else None
    except (KeyError, ValueError) as exc:
        raise MalformedFile(f"inconsistent index file: {exc}") from None
    decoder = SparseDecoder(M, indptr, indices, values, order, None if sparsity < 0 else sparsity,
                            head_mask, None if math.isnan(energy) else energy)
    assignment.neighbors
    return Index(assignment, bank, decoder, params, {"batches": batches, "peak_resident_vectors": None})
