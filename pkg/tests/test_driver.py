"""Unit tests for tiled matmul orchestration and cycle accounting."""

import numpy as np
import pytest

from stasim.arith import wrap_signed
from stasim.array import ArrayConfig, FaultSite, RegClass
from stasim.driver import (
    CycleStats,
    Layer,
    Workload,
    overhead_report,
    synthetic_workload,
    tiled_matmul,
)
from stasim.sparsity import densify, pack_tile


def pruned_oracle(a, w, config):
    """Dense reference product against the per-block pruned weights."""
    k = w.shape[0]
    pad_rows = -(-k // config.m) * config.m
    w_pad = np.zeros((pad_rows, w.shape[1]), dtype=np.int64)
    w_pad[:k] = w
    pruned = densify(pack_tile(w_pad, config.m, config.n, config.data_width))[:k]
    return wrap_signed(a.astype(np.int64) @ pruned, config.acc_width)


def test_single_tile_layer_matches_oracle():
    rng = np.random.default_rng(307)
    cfg = ArrayConfig()
    a = rng.integers(-(1 << 15), 1 << 15, size=(6, cfg.block_rows), dtype=np.int64)
    w = rng.integers(-(1 << 15), 1 << 15, size=(cfg.block_rows, cfg.cols), dtype=np.int64)
    results, stats, reports = tiled_matmul(Workload([Layer(a, w)]), cfg)
    assert np.array_equal(results[0], pruned_oracle(a, w, cfg))
    assert stats.tiles_executed == 1
    assert len(reports) == 1
    assert not reports[0].detected


def test_multi_tile_layer_with_padding_matches_oracle():
    rng = np.random.default_rng(311)
    cfg = ArrayConfig()
    # 50 is not a multiple of 32 and 21 is not a multiple of 8, so both
    # directions need zero padding
    a = rng.integers(-(1 << 15), 1 << 15, size=(9, 50), dtype=np.int64)
    w = rng.integers(-(1 << 15), 1 << 15, size=(50, 21), dtype=np.int64)
    results, stats, _ = tiled_matmul(Workload([Layer(a, w)]), cfg)
    assert results[0].shape == (9, 21)
    assert np.array_equal(results[0], pruned_oracle(a, w, cfg))
    assert stats.tiles_executed == 2 * 3


def test_multiple_layers_and_report_ids():
    rng = np.random.default_rng(313)
    cfg = ArrayConfig(rows=2, cols=4)
    wl = synthetic_workload(rng, [(3, 8, 4), (5, 16, 9)], magnitude=300)
    results, stats, reports = tiled_matmul(wl, cfg)
    for layer, result in zip(wl.layers, results):
        assert np.array_equal(result, pruned_oracle(layer.a, layer.w, cfg))
    assert stats.tiles_executed == 1 + 2 * 3
    assert [r.tile_id for r in reports][:2] == ["layer0/k0/c0", "layer1/k0/c0"]


def test_testing_flag_does_not_change_results():
    rng = np.random.default_rng(317)
    cfg = ArrayConfig()
    wl = synthetic_workload(rng, [(8, 40, 12)])
    on, stats_on, reports_on = tiled_matmul(wl, cfg, testing=True)
    off, stats_off, reports_off = tiled_matmul(wl, cfg, testing=False)
    assert np.array_equal(on[0], off[0])
    assert reports_off == []
    assert all(not r.detected for r in reports_on)
    assert stats_on.test_cycles == 4 * stats_on.tiles_executed
    assert stats_off.test_cycles == 0
    assert stats_on.load_cycles == stats_off.load_cycles
    assert stats_on.compute_cycles == stats_off.compute_cycles


def test_cycle_accounting_breakdown():
    rng = np.random.default_rng(331)
    cfg = ArrayConfig()
    x_rows = 20
    wl = synthetic_workload(rng, [(x_rows, 64, 16)], magnitude=50)
    _, stats, _ = tiled_matmul(wl, cfg)
    tiles = 2 * 2
    assert stats.tiles_executed == tiles
    assert stats.load_cycles == cfg.rows * tiles
    assert stats.compute_cycles == (x_rows + cfg.rows + cfg.cols - 1) * tiles
    assert stats.test_cycles == 4 * tiles
    assert stats.total_cycles == (
        stats.load_cycles + stats.compute_cycles + stats.test_cycles
    )


def test_overhead_report_values():
    same = CycleStats(load_cycles=80, compute_cycles=1000, test_cycles=0)
    assert overhead_report(same, same) == 0.0
    on = CycleStats(load_cycles=1000, compute_cycles=3000, test_cycles=40)
    off = CycleStats(load_cycles=1000, compute_cycles=3000, test_cycles=0)
    assert overhead_report(on, off) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        overhead_report(on, CycleStats())


def test_overhead_shrinks_with_rows_per_tile():
    rng = np.random.default_rng(337)
    cfg = ArrayConfig()
    ratios = []
    for x_rows in (40, 80, 160, 320):
        wl = synthetic_workload(rng, [(x_rows, 32, 8)], magnitude=20)
        _, on, _ = tiled_matmul(wl, cfg, testing=True)
        _, off, _ = tiled_matmul(wl, cfg, testing=False)
        ratios.append(overhead_report(on, off))
    assert ratios == sorted(ratios, reverse=True)
    assert ratios[0] > ratios[-1]


def test_column_padding_region_is_inert():
    rng = np.random.default_rng(347)
    cfg = ArrayConfig()
    a = rng.integers(-500, 501, size=(4, 32), dtype=np.int64)
    w = rng.integers(-500, 501, size=(32, 5), dtype=np.int64)
    w_padded = np.zeros((32, cfg.cols), dtype=np.int64)
    w_padded[:, :5] = w
    narrow, _, _ = tiled_matmul(Workload([Layer(a, w)]), cfg)
    wide, _, _ = tiled_matmul(Workload([Layer(a, w_padded)]), cfg)
    assert np.array_equal(narrow[0], wide[0][:, :5])
    assert not wide[0][:, 5:].any()


def test_injected_fault_is_reported_but_run_completes():
    rng = np.random.default_rng(349)
    cfg = ArrayConfig()
    wl = synthetic_workload(rng, [(4, 64, 16)])
    fault = FaultSite(RegClass.EDGE_ACCUMULATOR, 0, 3, 0, 20, 1)
    results, stats, reports = tiled_matmul(wl, cfg, faults=(fault,))
    assert stats.tiles_executed == 4
    assert len(results) == 1
    assert all(r.detected for r in reports)


def test_shape_and_range_validation():
    cfg = ArrayConfig()
    bad_chain = Workload([Layer(np.ones((2, 8), dtype=np.int64), np.ones((9, 4), dtype=np.int64))])
    with pytest.raises(ValueError):
        tiled_matmul(bad_chain, cfg)
    too_wide = Workload(
        [Layer(np.full((2, 8), 1 << 20, dtype=np.int64), np.ones((8, 4), dtype=np.int64))]
    )
    with pytest.raises(ValueError):
        tiled_matmul(too_wide, cfg)


def test_synthetic_workload_shapes_and_bounds():
    rng = np.random.default_rng(353)
    wl = synthetic_workload(rng, [(3, 5, 7), (11, 13, 2)], magnitude=9)
    assert [layer.a.shape for layer in wl.layers] == [(3, 5), (11, 13)]
    assert [layer.w.shape for layer in wl.layers] == [(5, 7), (13, 2)]
    for layer in wl.layers:
        assert abs(layer.a).max() <= 9
        assert abs(layer.w).max() <= 9
    full = synthetic_workload(rng, [(64, 64, 64)])
    assert abs(full.layers[0].a).max() > 9  # defaults use the full data width
