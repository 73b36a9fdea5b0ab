"""Similarity search by testing groups of nearly orthogonal vectors.

Vectors are pooled into memory units, each summarised by one memory vector;
a query is compared with the memory vectors only and a sparse decoder maps
those group measurements back to per-vector similarity estimates.
"""

import os

# LOGT_THREADS caps BLAS worker threads; it only takes effect if set before numpy loads.
_threads = os.environ.get("LOGT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .core import (Assignment, AssignmentParams, Dataset, MemoryBank, RankedResult, SparseDecoder,  # noqa: E402
                   exhaustive_similarities, rank_scores, validate_dataset, validate_query)
from .decoding import (baseline_decoder_gt, build_decoder, cascade_split, solve_local_decoder,  # noqa: E402
                       solve_omp_decoder, support_order0, support_order1)
from .encoding import encode, encode_pinv, encode_sum  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .evaluation import (EvalReport, GroundTruth, average_precision, complexity_ratio, evaluate,  # noqa: E402
                         evaluate_exhaustive, predicted_ratio)
from .grouping import intra_unit_coherence, orthogonal_assignment, random_assignment  # noqa: E402
from .index import BuildParams, Index, batch_build, build_index  # noqa: E402
from .io import load_index, read_ground_truth, read_vecs, save_index, write_vecs  # noqa: E402
from .quantization import ProductQuantizer, build_decoder_pq, pq_encode, pq_measure, pq_train  # noqa: E402
from .search import QueryParams, correct, decode, measure, query, query_cascade, search  # noqa: E402
from .synthetic import planted_benchmark  # noqa: E402

__version__ = "0.1.0"
