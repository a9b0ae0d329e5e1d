"""Cycle-level simulator of an N:M structured-sparse systolic tensor array.

The package models a weight-stationary grid of tensor processing elements
fed by structured-sparse packed weights, a periodic four-vector online
self-test with golden-reference comparison at the south edge, stuck-at fault
injection on every register class, fault localization from the test
signatures, and campaign tooling that measures coverage over a workload.
"""

from stasim.arith import (
    Word,
    bit_not,
    force_bit,
    force_signed,
    force_unsigned,
    is_bitwise_complement,
    wrap_add,
    wrap_mul,
    wrap_signed,
)
from stasim.array import ArrayConfig, FaultSite, RegClass, TensorArray, TpeState
from stasim.campaign import (
    CoverageReport,
    enumerate_faults,
    random_tiles,
    run_campaign,
)
from stasim.driver import (
    CycleStats,
    Layer,
    Workload,
    overhead_report,
    synthetic_workload,
    tiled_matmul,
)
from stasim.selftest import (
    GoldenReference,
    TestReport,
    Verdict,
    VerdictKind,
    classify,
    compute_golden,
    locate_activation,
    run_session,
    session_vectors,
)
from stasim.sparsity import (
    SparseBlock,
    SparseWeightTile,
    densify,
    pack_tile,
    prune_to_nm,
    read_matrix_csv,
    validate_nm,
    write_matrix_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "CoverageReport",
    "CycleStats",
    "FaultSite",
    "GoldenReference",
    "Layer",
    "RegClass",
    "SparseBlock",
    "SparseWeightTile",
    "TensorArray",
    "TestReport",
    "TpeState",
    "Verdict",
    "VerdictKind",
    "Word",
    "Workload",
    "bit_not",
    "classify",
    "compute_golden",
    "densify",
    "enumerate_faults",
    "force_bit",
    "force_signed",
    "force_unsigned",
    "is_bitwise_complement",
    "locate_activation",
    "overhead_report",
    "pack_tile",
    "prune_to_nm",
    "random_tiles",
    "read_matrix_csv",
    "run_campaign",
    "run_session",
    "session_vectors",
    "synthetic_workload",
    "tiled_matmul",
    "validate_nm",
    "wrap_add",
    "wrap_mul",
    "wrap_signed",
    "write_matrix_csv",
    "__version__",
]
