"""Unit tests for fault enumeration and coverage campaigns."""

import json

import numpy as np
import pytest

from stasim.array import ArrayConfig, FaultSite, RegClass
from stasim.campaign import enumerate_faults, random_tiles, run_campaign
from stasim.sparsity import densify, pack_tile

TINY = ArrayConfig(rows=1, cols=2, m=4, n=2, data_width=8, acc_width=16)


def class_counts(faults):
    counts = {cls: 0 for cls in RegClass}
    for f in faults:
        counts[f.reg_class] += 1
    return counts


def zero_tile(config):
    dense = np.zeros(config.tile_shape, dtype=np.int64)
    return pack_tile(dense, config.m, config.n, config.data_width)


def test_enumeration_count_default_config():
    faults = enumerate_faults(ArrayConfig())
    # per TPE: 4*16 activation + 2*16 weight + 2*2 index + 32 output bits,
    # each in two polarities, for 64 TPEs; plus 8 edge accumulators
    assert len(faults) == 64 * (64 + 32 + 4 + 32) * 2 + 8 * 32 * 2
    assert len(faults) == 17408


def test_enumeration_count_single_tpe():
    faults = enumerate_faults(ArrayConfig(rows=1, cols=1))
    assert len(faults) == (64 + 32 + 4 + 32 + 32) * 2
    assert len(faults) == 328


def test_enumeration_is_duplicate_free_and_valid():
    faults = enumerate_faults(TINY)
    assert len(set(faults)) == len(faults)
    for fault in faults:
        fault.validate(TINY)


def test_enumeration_tracks_accumulator_width():
    narrow = class_counts(enumerate_faults(TINY))
    wide = class_counts(
        enumerate_faults(
            ArrayConfig(rows=1, cols=2, m=4, n=2, data_width=8, acc_width=32)
        )
    )
    assert wide[RegClass.OUTPUT] == 2 * narrow[RegClass.OUTPUT]
    assert wide[RegClass.EDGE_ACCUMULATOR] == 2 * narrow[RegClass.EDGE_ACCUMULATOR]
    for cls in (RegClass.ACTIVATION, RegClass.WEIGHT, RegClass.WEIGHT_INDEX):
        assert wide[cls] == narrow[cls]


def test_stuck_zero_weight_faults_on_zero_tile_are_harmless():
    faults = [
        f
        for f in enumerate_faults(TINY)
        if f.reg_class is RegClass.WEIGHT and f.stuck == 0
    ]
    report = run_campaign(
        [zero_tile(TINY)], TINY, faults=faults, check_harmless=True, seed=5
    )
    bucket = report.per_class["weight"]
    assert report.detected == 0
    assert bucket["undetected"] == len(faults)
    assert bucket["harmless_verified"] == len(faults)
    assert bucket["not_harmless"] == 0
    assert report.coverage == 0.0


def test_output_and_edge_faults_always_detected():
    rng = np.random.default_rng(401)
    faults = [
        f
        for f in enumerate_faults(TINY)
        if f.reg_class in (RegClass.OUTPUT, RegClass.EDGE_ACCUMULATOR)
    ]
    report = run_campaign(random_tiles(rng, TINY, 1), TINY, faults=faults)
    assert report.detected == report.total_faults == len(faults)
    for name in ("output", "edge_accumulator"):
        bucket = report.per_class[name]
        assert bucket["detected"] == bucket["total"]
    assert report.classification_checked == len(faults)
    assert report.classification_correct == len(faults)


def test_campaign_is_deterministic():
    rng = np.random.default_rng(409)
    tiles = random_tiles(rng, TINY, 2, magnitude=100)
    kwargs = dict(check_harmless=True, harmless_inputs=3, harmless_rows=2, seed=7)
    first = run_campaign(tiles, TINY, **kwargs)
    second = run_campaign(tiles, TINY, **kwargs)
    assert first.to_dict() == second.to_dict()


def test_parallel_jobs_match_serial():
    rng = np.random.default_rng(419)
    tiles = random_tiles(rng, TINY, 2, magnitude=100)
    faults = enumerate_faults(TINY)[::4]
    serial = run_campaign(tiles, TINY, faults=faults, jobs=1)
    parallel = run_campaign(tiles, TINY, faults=faults, jobs=2)
    assert serial.to_dict() == parallel.to_dict()


def test_cumulative_curve_shape_and_totals():
    rng = np.random.default_rng(421)
    tiles = random_tiles(rng, TINY, 3)
    report = run_campaign(tiles, TINY)
    assert report.total_faults == len(enumerate_faults(TINY))
    assert len(report.cumulative_curve) == 3
    curve = report.cumulative_curve
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    assert curve[-1] == pytest.approx(report.coverage)
    assert report.coverage == report.detected / report.total_faults
    for bucket in report.per_class.values():
        assert bucket["total"] == bucket["detected"] + bucket["undetected"]


def test_curve_csv_format(tmp_path):
    rng = np.random.default_rng(431)
    report = run_campaign(
        random_tiles(rng, TINY, 2), TINY, faults=enumerate_faults(TINY)[:40]
    )
    path = tmp_path / "curve.csv"
    report.write_curve_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tile_index,coverage"
    assert len(lines) == 3
    for i, line in enumerate(lines[1:], start=1):
        index, cov = line.split(",")
        assert int(index) == i
        assert cov == f"{report.cumulative_curve[i - 1]:.6f}"


def test_report_json_round_trip():
    rng = np.random.default_rng(433)
    report = run_campaign(
        random_tiles(rng, TINY, 1), TINY, faults=enumerate_faults(TINY)[:20]
    )
    assert json.loads(report.to_json()) == json.loads(
        json.dumps(report.to_dict(), sort_keys=True)
    )
    payload = json.loads(report.to_json())
    assert payload["config"]["rows"] == TINY.rows
    assert payload["classification"]["checked"] <= payload["detected"]


def test_random_tiles_respect_magnitude():
    rng = np.random.default_rng(439)
    for tile in random_tiles(rng, TINY, 4, magnitude=11):
        assert abs(densify(tile)).max() <= 11
    full = random_tiles(rng, TINY, 4)
    assert max(abs(densify(t)).max() for t in full) > 11


def test_campaign_rejects_empty_workload():
    with pytest.raises(ValueError):
        run_campaign([], TINY)


def test_unknown_fault_site_rejected_by_validate():
    bad = FaultSite(RegClass.WEIGHT, TINY.rows, 0, 0, 0, 1)
    with pytest.raises(ValueError):
        bad.validate(TINY)
