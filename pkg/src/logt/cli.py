"""Command-line driver: build, query, eval, oracle, stats (and synth for demo data)."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import RankedResult, exhaustive_similarities, rank_scores, validate_dataset, validate_query
from .errors import LogtError
from .evaluation import complexity_ratio, evaluate, evaluate_exhaustive, predicted_ratio
from .index import BuildParams, batch_build, build_index
from .io import (load_index, read_ground_truth, read_vecs, save_index, write_ground_truth,
                 write_report_csv, write_results_csv, write_vecs)
from .search import QueryParams, search
from .synthetic import planted_benchmark


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("none", "0") else int(text)


def _load_queries(path, d: int, normalize: bool) -> np.ndarray:
    Q = read_vecs(path)
    if Q.shape[0] != d:
        raise LogtError(f"queries have dimension {Q.shape[0]}, index expects {d}")
    cols = [validate_query(Q[:, j], d, normalize) for j in range(Q.shape[1])]
    return np.column_stack(cols) if cols else Q


def _split(X: np.ndarray, batches: int):
    for part in np.array_split(np.arange(X.shape[1]), batches):
        yield X[:, part]


def cmd_build(args) -> int:
    params = BuildParams(n=args.n, m=args.m, strategy=args.strategy, chunk_factor=args.chunk_factor,
                         encoder=args.encoder, order=args.order, omp_L=args.omp_L, cascade_p=args.cascade_p,
                         pq_m=args.pq_m, seed=args.seed)
    X = read_vecs(args.vectors)
    if args.batches < 1 or args.batches > X.shape[1]:
        raise LogtError(f"--batches must be in [1, {X.shape[1]}]")
    normalize = not args.no_normalize
    if args.batches == 1:
        index = build_index(validate_dataset(X, normalize=normalize), params)
    else:
        index = batch_build(_split(X, args.batches), params, normalize=normalize)
    save_index(index, args.out)
    print(f"built index N={index.N} M={index.M} d={index.d} nnz(U)={index.decoder.nnz} "
          f"batches={index.build_info['batches']} -> {args.out}")
    return 0


def _query_params(args) -> QueryParams:
    return QueryParams(top_k=args.top_k, correction=args.correct, shortlist=args.shortlist,
                       correction_depth=args.correction_depth, normalize_query=not args.no_normalize)


def cmd_query(args) -> int:
    index = load_index(args.index)
    params = _query_params(args)
    Q = _load_queries(args.queries, index.d, params.normalize_query)
    results = [search(index, Q[:, j], params) for j in range(Q.shape[1])]
    write_results_csv(args.out, results)
    print(f"{len(results)} queries -> {args.out}")
    return 0


def cmd_oracle(args) -> int:
    dataset = validate_dataset(read_vecs(args.vectors), normalize=not args.no_normalize)
    Q = _load_queries(args.queries, dataset.d, not args.no_normalize)
    results = []
    for j in range(Q.shape[1]):
        s = exhaustive_similarities(dataset, Q[:, j])
        order = rank_scores(s, args.top_k)
        results.append(RankedResult(order, s[order]))
    write_results_csv(args.out, results)
    print(f"{len(results)} exhaustive queries -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    index = load_index(args.index)
    params = _query_params(args)
    Q = _load_queries(args.queries, index.d, params.normalize_query)
    gt = read_ground_truth(args.gt, Q.shape[1])
    reports = [evaluate(index, Q, gt, params, name=Path(args.index).stem)]
    if args.vectors:
        dataset = validate_dataset(read_vecs(args.vectors), normalize=params.normalize_query)
        reports.append(evaluate_exhaustive(dataset, Q, gt, params.top_k))
    for r in reports:
        print(r.summary())
    if args.out:
        write_report_csv(args.out, reports)
    return 0


def cmd_stats(args) -> int:
    index = load_index(args.index)
    dec = index.decoder
    print(f"N={index.N} d={index.d} M={index.M} n={index.params.n} m={index.params.m}")
    print(f"nnz(U)={dec.nnz}")
    print(f"predicted rho={predicted_ratio(index):.6f}")
    if dec.has_cascade:
        head = int(dec.head_mask.sum())
        print(f"nnz(U0)={head} nnz(U1)={dec.nnz - head}")
        print(f"cascade rho lower bound={complexity_ratio(index.M, index.d, head, index.N):.6f}")
    return 0


def cmd_synth(args) -> int:
    dataset, Q, gt = planted_benchmark(args.N, args.d, args.queries, args.matches, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_vecs(out / "base.fvecs", dataset.X)
    write_vecs(out / "queries.fvecs", Q)
    write_ground_truth(out / "gt.txt", gt)
    print(f"wrote base.fvecs, queries.fvecs, gt.txt to {out}")
    return 0


def _add_query_flags(p, top_k: int) -> None:
    p.add_argument("--queries", required=True)
    p.add_argument("--top-k", type=int, default=top_k)
    p.add_argument("--correct", action="store_true", help="per-unit suppression of the ranking")
    p.add_argument("--shortlist", type=int, default=None, help="cascade shortlist size")
    p.add_argument("--correction-depth", type=int, default=None)
    p.add_argument("--no-normalize", action="store_true", help="require unit-norm inputs instead of normalizing")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logt", description="Group-testing similarity search over memory vectors.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build and save an index")
    p.add_argument("--vectors", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--strategy", choices=("orthogonal", "random"), default="orthogonal")
    p.add_argument("--chunk-factor", type=int, default=16)
    p.add_argument("--encoder", choices=("pinv", "sum"), default="pinv")
    p.add_argument("--order", type=int, choices=(0, 1), default=1)
    p.add_argument("--omp-L", type=_optional_int, default=300, help="OMP sparsity; 'none' for dense")
    p.add_argument("--cascade-p", type=float, default=None)
    p.add_argument("--pq-m", type=int, default=None)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer queries with a saved index")
    p.add_argument("--index", required=True)
    _add_query_flags(p, 10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="mAP and complexity ratio against ground truth")
    p.add_argument("--index", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--vectors", default=None, help="also evaluate exhaustive search over these vectors")
    _add_query_flags(p, 100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exhaustive inner-product search")
    p.add_argument("--vectors", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("stats", help="print index size and predicted complexity ratio")
    p.add_argument("--index", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a planted-match benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--matches", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (LogtError, OSError) as exc:
        print(f"logt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
