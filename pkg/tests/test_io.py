import struct
import zlib

import numpy as np
import pytest

from golden import GOLDEN_HEX, tiny_index
from logt import BuildParams, GroundTruth, QueryParams, build_index, load_index, pq_measure, read_ground_truth, \
    read_vecs, save_index, search, validate_dataset, write_vecs
from logt.core import RankedResult
from logt.errors import ChecksumFailure, MalformedFile, VersionMismatch
from logt.io import read_results_csv, write_ground_truth, write_results_csv


def test_read_single_fvecs_record(tmp_path):
    path = tmp_path / "one.fvecs"
    path.write_bytes(struct.pack("<i2f", 2, 1.0, 0.0))
    X = read_vecs(path)
    assert X.shape == (2, 1)
    np.testing.assert_array_equal(X[:, 0], [1.0, 0.0])


def test_truncated_and_inconsistent_records(tmp_path):
    path = tmp_path / "bad.fvecs"
    path.write_bytes(struct.pack("<i2f", 2, 1.0, 0.0) + struct.pack("<if", 2, 1.0))
    with pytest.raises(MalformedFile):
        read_vecs(path)
    path.write_bytes(struct.pack("<i2f", 2, 1.0, 0.0) + struct.pack("<i", 1) + struct.pack("<i", 0))
    with pytest.raises(MalformedFile):
        read_vecs(path)
    path.write_bytes(b"\x01\x00")
    with pytest.raises(MalformedFile):
        read_vecs(path)
    with pytest.raises(MalformedFile):
        read_vecs(tmp_path / "x.txt")


def test_bvecs_record(tmp_path):
    path = tmp_path / "one.bvecs"
    path.write_bytes(struct.pack("<i3B", 3, 0, 7, 255))
    np.testing.assert_array_equal(read_vecs(path)[:, 0], [0, 7, 255])


@pytest.mark.parametrize("fmt", ["fvecs", "bvecs"])
def test_vecs_roundtrip_bit_identical(tmp_path, fmt):
    rng = np.random.default_rng(0)
    if fmt == "fvecs":
        X = rng.standard_normal((13, 40)).astype(np.float32).astype(np.float64)
    else:
        X = rng.integers(0, 256, (13, 40)).astype(np.float64)
    path = tmp_path / f"data.{fmt}"
    write_vecs(path, X)
    assert path.stat().st_size == 40 * (4 + 13 * (4 if fmt == "fvecs" else 1))
    np.testing.assert_array_equal(read_vecs(path), X)
    raw = path.read_bytes()
    write_vecs(path, read_vecs(path))
    assert path.read_bytes() == raw


def small_index(**kw):
    rng = np.random.default_rng(1)
    ds = validate_dataset(rng.standard_normal((16, 800)), normalize=True)
    base = dict(n=10, m=2, order=1, omp_L=40, seed=3)
    base.update(kw)
    return ds, build_index(ds, BuildParams(**base))


def assert_same_answers(a, b, queries, params):
    for j in range(queries.shape[1]):
        ra, rb = search(a, queries[:, j], params), search(b, queries[:, j], params)
        np.testing.assert_array_equal(ra.indices, rb.indices)
        np.testing.assert_array_equal(ra.scores, rb.scores)
        np.testing.assert_array_equal(ra.suppressed, rb.suppressed)


def random_queries(d, count, seed=5):
    Q = np.random.default_rng(seed).standard_normal((d, count))
    return Q / np.linalg.norm(Q, axis=0)


@pytest.mark.parametrize("kw", [{}, {"cascade_p": 0.7}, {"float32": False}])
def test_index_roundtrip(tmp_path, kw):
    ds, idx = small_index(**kw)
    save_index(idx, tmp_path / "i.logt")
    loaded = load_index(tmp_path / "i.logt")
    assert loaded.params == idx.params
    np.testing.assert_array_equal(loaded.assignment.unit_members, idx.assignment.unit_members)
    np.testing.assert_array_equal(loaded.assignment.unit_ptr, idx.assignment.unit_ptr)
    Q = random_queries(16, 100)
    assert_same_answers(idx, loaded, Q, QueryParams(top_k=20))
    assert_same_answers(idx, loaded, Q, QueryParams(top_k=20, correction=True))


def test_pq_index_roundtrip(tmp_path):
    ds, idx = small_index(pq_m=4, pq_iters=5)
    save_index(idx, tmp_path / "pq.logt")
    loaded = load_index(tmp_path / "pq.logt")
    np.testing.assert_array_equal(loaded.bank.codes, idx.bank.codes)
    np.testing.assert_array_equal(loaded.bank.quantizer.codebooks, idx.bank.quantizer.codebooks)
    Q = random_queries(16, 20)
    for j in range(20):
        np.testing.assert_array_equal(pq_measure(loaded.bank.quantizer, loaded.bank.codes, Q[:, j]),
                                      pq_measure(idx.bank.quantizer, idx.bank.codes, Q[:, j]))
    assert_same_answers(idx, loaded, Q, QueryParams(top_k=10))


def section_offset(buf, tag):
    pos = 8
    while True:
        length = struct.unpack_from("<Q", buf, pos + 4)[0]
        if buf[pos:pos + 4] == tag:
            return pos + 12, length
        pos += 16 + length


def test_corrupt_decoder_byte_detected(tmp_path):
    _, idx = small_index()
    path = tmp_path / "i.logt"
    save_index(idx, path)
    buf = bytearray(path.read_bytes())
    start, length = section_offset(buf, b"DECO")
    buf[start + length // 2] ^= 0x01
    path.write_bytes(bytes(buf))
    with pytest.raises(ChecksumFailure):
        load_index(path)


def test_version_magic_and_truncation(tmp_path):
    _, idx = small_index()
    path = tmp_path / "i.logt"
    save_index(idx, path)
    good = path.read_bytes()
    path.write_bytes(good[:4] + struct.pack("<H", 99) + good[6:])
    with pytest.raises(VersionMismatch):
        load_index(path)
    path.write_bytes(b"NOPE" + good[4:])
    with pytest.raises(MalformedFile):
        load_index(path)
    path.write_bytes(good[:len(good) // 2])
    with pytest.raises(MalformedFile):
        load_index(path)


def test_golden_file_bytes(tmp_path):
    save_index(tiny_index(), tmp_path / "tiny.logt")
    data = (tmp_path / "tiny.logt").read_bytes()
    golden = bytes.fromhex(open(GOLDEN_HEX).read().replace("\n", " "))
    assert data == golden
    # independent reading of the fixed layout
    assert data[:4] == b"LOGT" and struct.unpack_from("<HH", data, 4) == (1, 0)
    assert data[8:12] == b"HEAD" and struct.unpack_from("<Q", data, 12)[0] == 84
    head = data[20:104]
    assert struct.unpack_from("<III", head, 0) == (4, 4, 2)
    assert struct.unpack_from("<I", data, 104)[0] == zlib.crc32(head)
    start, length = section_offset(data, b"ASGN")
    assert np.frombuffer(data[start:start + length], "<u4").tolist() == [2, 2, 0, 2, 1, 2]


def test_ground_truth_roundtrip(tmp_path):
    gt = GroundTruth([np.array([1, 5]), np.array([2]), np.zeros(0, np.int64)],
                     [np.array([3]), np.zeros(0, np.int64), np.zeros(0, np.int64)])
    write_ground_truth(tmp_path / "gt.txt", gt)
    back = read_ground_truth(tmp_path / "gt.txt")
    assert [r.tolist() for r in back.relevant] == [[1, 5], [2], []]
    assert [r.tolist() for r in back.ignore] == [[3], [], []]
    (tmp_path / "bad.txt").write_text("0 | 1 | 2 | 3\n")
    with pytest.raises(MalformedFile):
        read_ground_truth(tmp_path / "bad.txt")
    (tmp_path / "sparse.txt").write_text("# comment\n2 | 4 7\n")
    sparse = read_ground_truth(tmp_path / "sparse.txt", num_queries=4)
    assert [r.tolist() for r in sparse.relevant] == [[], [], [4, 7], []]


def test_results_csv(tmp_path):
    res = [RankedResult(np.array([4, 1]), np.array([0.9, 0.5]), np.array([2]), np.array([0.7])),
           RankedResult(np.array([3]), np.array([0.1]))]
    write_results_csv(tmp_path / "r.csv", res)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "query_id,rank,vector_id,score,suppressed_flag"
    assert lines[3] == "0,0,2,0.7,1"
    assert [r.tolist() for r in read_results_csv(tmp_path / "r.csv")] == [[4, 1], [3]]
