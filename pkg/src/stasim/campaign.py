"""Stuck-at fault campaigns: enumerate, inject, measure coverage.

A campaign walks the whole single-fault universe of an array configuration.
Each fault gets a fresh fault state on its own array; the workload's tiles
are then visited in order, running one self-test session per tile, and the
first session that flags anything records the detection tile.  Coverage is
the detected fraction; the cumulative curve tracks it tile by tile.

Optionally the campaign checks, per detected fault, that the session verdict
names the injected register class, and, per undetected fault, whether the
fault is actually harmless (bit-identical matmul results on random inputs).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from stasim.array import ArrayConfig, FaultSite, RegClass, TensorArray
from stasim.selftest import (
    GoldenReference,
    TestReport,
    VerdictKind,
    compute_golden,
    run_session,
)
from stasim.sparsity import SparseWeightTile, pack_tile


def enumerate_faults(config: ArrayConfig) -> list[FaultSite]:
    """Every stuck-at fault of the configuration, exactly once.

    Covers both polarities of every bit of every activation, weight,
    position-index and output register of every TPE, plus the per-column
    edge accumulators.
    """
    faults: list[FaultSite] = []
    per_tpe = (
        (RegClass.ACTIVATION, config.m, config.data_width),
        (RegClass.WEIGHT, config.n, config.data_width),
        (RegClass.WEIGHT_INDEX, config.n, config.index_width),
        (RegClass.OUTPUT, 1, config.acc_width),
    )
    for cls, elements, width in per_tpe:
        for row in range(config.rows):
            for col in range(config.cols):
                for element in range(elements):
                    for bit in range(width):
                        for stuck in (0, 1):
                            faults.append(
                                FaultSite(cls, row, col, element, bit, stuck)
                            )
    for col in range(config.cols):
        for bit in range(config.acc_width):
            for stuck in (0, 1):
                faults.append(
                    FaultSite(RegClass.EDGE_ACCUMULATOR, 0, col, 0, bit, stuck)
                )
    return faults


def random_tiles(
    rng: np.random.Generator,
    config: ArrayConfig,
    count: int,
    magnitude: int | None = None,
) -> list[SparseWeightTile]:
    """Random dense weight tiles, pruned and packed for the array."""
    if magnitude is None:
        lo, hi = -(1 << (config.data_width - 1)), 1 << (config.data_width - 1)
    else:
        lo, hi = -magnitude, magnitude + 1
    tiles = []
    for _ in range(count):
        dense = rng.integers(lo, hi, size=config.tile_shape, dtype=np.int64)
        tiles.append(pack_tile(dense, config.m, config.n, config.data_width))
    return tiles


def _test_flags(report: TestReport) -> tuple[bool, bool, bool, bool]:
    return tuple(bool(report.failing_columns(t)) for t in range(4))


def _classification_outcome(
    fault: FaultSite, report: TestReport
) -> Optional[bool]:
    """Did the verdict name the injected class?  None when unconstrained.

    Weight, output and edge-accumulator faults must be named at the injected
    column.  Index faults are only constrained when test 3 alone flagged
    them, activation faults when test 4 alone did (the window must then
    contain the injected column); any other signature leaves the verdict
    unconstrained.
    """
    verdicts = report.verdicts
    t1f, t2f, t3f, t4f = _test_flags(report)
    cls = fault.reg_class
    if cls is RegClass.WEIGHT:
        return verdicts[fault.col].kind is VerdictKind.WEIGHT_REGISTER
    if cls is RegClass.OUTPUT:
        return verdicts[fault.col].kind is VerdictKind.OUTPUT_REGISTER
    if cls is RegClass.EDGE_ACCUMULATOR:
        return verdicts[fault.col].kind is VerdictKind.COMPARISON_ADDER
    if cls is RegClass.WEIGHT_INDEX:
        if t3f and not (t1f or t2f or t4f):
            return verdicts[fault.col].kind is VerdictKind.WEIGHT_INDEX_REGISTER
        return None
    if cls is RegClass.ACTIVATION:
        if t4f and not (t1f or t2f or t3f):
            for v in verdicts:
                if v.kind is VerdictKind.ACTIVATION_WINDOW:
                    lo, hi = v.window
                    return lo <= fault.col <= hi
            return False
        return None
    return None


def _harmless_harness(
    tiles: Sequence[SparseWeightTile],
    config: ArrayConfig,
    inputs: int,
    rows_per_input: int,
    seed: int,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per tile: stacked random activations and their fault-free outputs.

    The random matrices are stacked into one stream because streamed rows
    never interact; one pass over the stack equals one pass per matrix.
    """
    rng = np.random.default_rng(seed)
    lo, hi = -(1 << (config.data_width - 1)), 1 << (config.data_width - 1)
    stacks = [
        rng.integers(
            lo, hi, size=(inputs * rows_per_input, config.block_rows), dtype=np.int64
        )
        for _ in tiles
    ]
    array = TensorArray(config)
    clean = []
    for tile, stack in zip(tiles, stacks):
        array.load_weights(tile)
        out, _ = array.run_compute(stack)
        clean.append(out)
    return stacks, clean


def _evaluate_faults(
    config: ArrayConfig,
    tiles: Sequence[SparseWeightTile],
    goldens: Sequence[GoldenReference],
    faults: Sequence[FaultSite],
    verify_classification: bool,
    harness: Optional[tuple[list[np.ndarray], list[np.ndarray]]],
) -> list[tuple[Optional[int], Optional[bool], Optional[bool]]]:
    """Outcome triple (detection tile, classification ok, harmless) per fault."""
    array = TensorArray(config)
    outcomes = []
    for fault in faults:
        array.clear_faults()
        array.inject(fault)
        detected_tile: Optional[int] = None
        classification_ok: Optional[bool] = None
        harmless: Optional[bool] = None
        for ti, (tile, golden) in enumerate(zip(tiles, goldens)):
            array.load_weights(tile)
            report = run_session(array, golden, tile_id=f"tile{ti}")
            if report.detected:
                detected_tile = ti
                if verify_classification:
                    classification_ok = _classification_outcome(fault, report)
                break
        if detected_tile is None and harness is not None:
            stacks, clean = harness
            harmless = True
            for tile, stack, want in zip(tiles, stacks, clean):
                array.load_weights(tile)
                got, _ = array.run_compute(stack)
                if not np.array_equal(got, want):
                    harmless = False
                    break
        outcomes.append((detected_tile, classification_ok, harmless))
    return outcomes


@dataclass
class CoverageReport:
    """Aggregated campaign outcome."""

    config: ArrayConfig
    tiles: int
    total_faults: int
    detected: int
    per_class: dict[str, dict[str, int]]
    cumulative_curve: list[float]
    classification_checked: int
    classification_correct: int
    harmless_checked: bool

    @property
    def coverage(self) -> float:
        return self.detected / self.total_faults if self.total_faults else 0.0

    def to_dict(self) -> dict:
        return {
            "config": {
                "rows": self.config.rows,
                "cols": self.config.cols,
                "m": self.config.m,
                "n": self.config.n,
                "data_width": self.config.data_width,
                "acc_width": self.config.acc_width,
                "mode": self.config.mode,
            },
            "tiles": self.tiles,
            "total_faults": self.total_faults,
            "detected": self.detected,
            "coverage": self.coverage,
            "per_class": self.per_class,
            "cumulative_curve": self.cumulative_curve,
            "classification": {
                "checked": self.classification_checked,
                "correct": self.classification_correct,
            },
            "harmless_checked": self.harmless_checked,
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    def write_curve_csv(self, path) -> None:
        """Cumulative coverage after each tile, as tile_index,coverage rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tile_index", "coverage"])
            for i, cov in enumerate(self.cumulative_curve, start=1):
                writer.writerow([i, f"{cov:.6f}"])


def run_campaign(
    tiles: Sequence[SparseWeightTile],
    config: ArrayConfig,
    *,
    faults: Optional[Sequence[FaultSite]] = None,
    verify_classification: bool = True,
    check_harmless: bool = False,
    harmless_inputs: int = 10,
    harmless_rows: int = 4,
    seed: int = 0,
    jobs: int = 1,
) -> CoverageReport:
    """Measure self-test coverage of the fault universe over a workload.

    Deterministic for a given argument set, including ``jobs``: workers
    partition the fault list and results merge back in enumeration order.
    """
    if not tiles:
        raise ValueError("campaign needs at least one weight tile")
    fault_list = list(enumerate_faults(config) if faults is None else faults)
    goldens = [compute_golden(tile, config) for tile in tiles]
    harness = (
        _harmless_harness(tiles, config, harmless_inputs, harmless_rows, seed)
        if check_harmless
        else None
    )

    if jobs > 1 and len(fault_list) > 1:
        chunk = -(-len(fault_list) // (jobs * 4))
        slices = [
            fault_list[i : i + chunk] for i in range(0, len(fault_list), chunk)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(
                _evaluate_faults,
                [config] * len(slices),
                [tiles] * len(slices),
                [goldens] * len(slices),
                slices,
                [verify_classification] * len(slices),
                [harness] * len(slices),
            )
            outcomes = [o for part in parts for o in part]
    else:
        outcomes = _evaluate_faults(
            config, tiles, goldens, fault_list, verify_classification, harness
        )

    per_class: dict[str, dict[str, int]] = {
        cls.value: {
            "total": 0,
            "detected": 0,
            "undetected": 0,
            "harmless_verified": 0,
            "not_harmless": 0,
        }
        for cls in RegClass
    }
    by_tile = np.zeros(len(tiles), dtype=np.int64)
    checked = correct = 0
    for fault, (detected_tile, cls_ok, harmless) in zip(fault_list, outcomes):
        bucket = per_class[fault.reg_class.value]
        bucket["total"] += 1
        if detected_tile is not None:
            bucket["detected"] += 1
            by_tile[detected_tile] += 1
            if cls_ok is not None:
                checked += 1
                correct += int(cls_ok)
        else:
            bucket["undetected"] += 1
            if harmless is True:
                bucket["harmless_verified"] += 1
            elif harmless is False:
                bucket["not_harmless"] += 1

    detected_total = int(by_tile.sum())
    curve = (
        (np.cumsum(by_tile) / len(fault_list)).tolist() if fault_list else []
    )
    return CoverageReport(
        config=config,
        tiles=len(tiles),
        total_faults=len(fault_list),
        detected=detected_total,
        per_class=per_class,
        cumulative_curve=[float(v) for v in curve],
        classification_checked=checked,
        classification_correct=correct,
        harmless_checked=check_harmless,
    )
