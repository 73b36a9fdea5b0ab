"""Tiny fully deterministic index whose file bytes are frozen under tests/data."""

import numpy as np

from logt import BuildParams, build_index, validate_dataset

GOLDEN_HEX = "tests/data/tiny_index.logt.hex"


def tiny_index():
    ds = validate_dataset(np.eye(4))
    return build_index(ds, BuildParams(n=2, m=1, strategy="random", order=0, omp_L=None, seed=0))
