"""Tiled matrix multiplication on the array, with cycle accounting.

The driver cuts a layer's weight matrix into array-sized tiles (rows*m dense
rows by cols columns, zero-padded at the edges), loads each tile, optionally
runs a self-test session on it, then streams the activation rows through.
Partial products of the K-direction tiles are accumulated host-side at the
accumulator width; every value-0 pad is mathematically inert, so padded and
unpadded runs agree bit for bit on the real region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stasim.arith import wrap_signed
from stasim.array import ArrayConfig, FaultSite, TensorArray
from stasim.selftest import TestReport, compute_golden, run_session
from stasim.sparsity import pack_tile


@dataclass
class Layer:
    """One dense matmul: activations ``a`` (X x K) times weights ``w`` (K x C)."""

    a: np.ndarray
    w: np.ndarray
    name: str = ""


@dataclass
class Workload:
    layers: list[Layer] = field(default_factory=list)


@dataclass
class CycleStats:
    """Cycle totals over a run, split by what the array was doing.

    A self-test session occupies exactly four pipeline-initiation cycles per
    tile; its drain overlaps resumed streaming, so four is also its total
    cost here.
    """

    load_cycles: int = 0
    compute_cycles: int = 0
    test_cycles: int = 0
    tiles_executed: int = 0

    @property
    def total_cycles(self) -> int:
        return self.load_cycles + self.compute_cycles + self.test_cycles

    def to_dict(self) -> dict:
        return {
            "load_cycles": self.load_cycles,
            "compute_cycles": self.compute_cycles,
            "test_cycles": self.test_cycles,
            "total_cycles": self.total_cycles,
            "tiles_executed": self.tiles_executed,
        }


def _check_fits(name: str, arr: np.ndarray, width: int) -> None:
    if np.any(wrap_signed(arr, width) != arr):
        raise ValueError(f"{name} values exceed {width}-bit signed range")


def tiled_matmul(
    workload: Workload,
    config: ArrayConfig,
    testing: bool = True,
    faults: tuple[FaultSite, ...] = (),
) -> tuple[list[np.ndarray], CycleStats, list[TestReport]]:
    """Run every layer through one array instance.

    Returns (results, stats, reports): one X x C result per layer, the cycle
    accounting, and one self-test report per executed tile when ``testing``
    is set (empty list otherwise).  Detection does not stop the run; callers
    inspect the reports.
    """
    array = TensorArray(config)
    for f in faults:
        array.inject(f)
    stats = CycleStats()
    reports: list[TestReport] = []
    results: list[np.ndarray] = []
    br, cols = config.block_rows, config.cols

    for li, layer in enumerate(workload.layers):
        a = np.asarray(layer.a, dtype=np.int64)
        w = np.asarray(layer.w, dtype=np.int64)
        if a.ndim != 2 or w.ndim != 2 or a.shape[1] != w.shape[0]:
            raise ValueError(
                f"layer {li}: shapes {a.shape} x {w.shape} do not chain"
            )
        _check_fits(f"layer {li} activation", a, config.data_width)
        _check_fits(f"layer {li} weight", w, config.data_width)
        x_rows, k_depth = a.shape
        c_total = w.shape[1]
        k_tiles = -(-k_depth // br)
        c_tiles = -(-c_total // cols)

        a_pad = np.zeros((x_rows, k_tiles * br), dtype=np.int64)
        a_pad[:, :k_depth] = a
        w_pad = np.zeros((k_tiles * br, c_tiles * cols), dtype=np.int64)
        w_pad[:k_depth, :c_total] = w

        acc = np.zeros((x_rows, c_tiles * cols), dtype=np.int64)
        for ki in range(k_tiles):
            for ci in range(c_tiles):
                tile = pack_tile(
                    w_pad[ki * br : (ki + 1) * br, ci * cols : (ci + 1) * cols],
                    config.m,
                    config.n,
                    config.data_width,
                )
                array.load_weights(tile)
                stats.load_cycles += config.rows
                if testing:
                    golden = compute_golden(tile, config)
                    reports.append(
                        run_session(array, golden, tile_id=f"layer{li}/k{ki}/c{ci}")
                    )
                    stats.test_cycles += 4
                out, cycles = array.run_compute(a_pad[:, ki * br : (ki + 1) * br])
                stats.compute_cycles += cycles
                acc[:, ci * cols : (ci + 1) * cols] += out
                stats.tiles_executed += 1
        results.append(wrap_signed(acc, config.acc_width)[:, :c_total])

    return results, stats, reports


def overhead_report(stats_on: CycleStats, stats_off: CycleStats) -> float:
    """Fractional cycle overhead of testing-on versus testing-off."""
    if stats_off.total_cycles == 0:
        raise ValueError("baseline run has zero cycles")
    return (stats_on.total_cycles - stats_off.total_cycles) / stats_off.total_cycles


def synthetic_workload(
    rng: np.random.Generator,
    shapes: list[tuple[int, int, int]],
    magnitude: int | None = None,
    data_width: int = 16,
) -> Workload:
    """Random integer layers with the given (X, K, C) shapes.

    Stands in for real network layers; shape lists can be chosen to mimic
    convolutional stacks lowered to matmuls.  ``magnitude`` bounds |value|,
    defaulting to the full data width.
    """
    if magnitude is None:
        lo, hi = -(1 << (data_width - 1)), 1 << (data_width - 1)
    else:
        lo, hi = -magnitude, magnitude + 1
    layers = []
    for i, (x, k, c) in enumerate(shapes):
        layers.append(
            Layer(
                a=rng.integers(lo, hi, size=(x, k), dtype=np.int64),
                w=rng.integers(lo, hi, size=(k, c), dtype=np.int64),
                name=f"layer{i}",
            )
        )
    return Workload(layers=layers)
