from dataclasses import replace

import pytest

from plan3d.errors import ConfigError
from plan3d.hardware import SMNG_P2, HardwareConfig
from plan3d.memory import ParallelConfig
from plan3d.model import ModelConfig
from plan3d.perf import EfficiencyParams
from plan3d.scaling import (
    DEFAULT_TARGETS, REFERENCE_BEST, ScalingSetup, Target, calibrate, predict,
    strong_scaling, weak_scaling,
)

SMALL = ModelConfig("small", 8, 512, 8, 1000, 256)
BASE = ParallelConfig(tp=4, pp=2, dp=1, mbs=1, gas=16, zero_stage=1)
FREE_COMM = HardwareConfig(intra_latency=0.0, inter_latency=0.0, intra_node_bw=1e30, inter_node_bw=1e29)


def test_weak_scaling_grid_and_baseline():
    r = weak_scaling(SMALL, BASE, SMNG_P2, EfficiencyParams())
    assert [p.tiles for p in r.points] == [8, 16, 32, 64]
    assert [p.global_batch for p in r.points] == [16, 32, 64, 128]
    assert r.baseline.efficiency == pytest.approx(100.0)
    assert r.efficiency_at(64) <= 100.0
    with pytest.raises(KeyError):
        r.efficiency_at(12)


def test_strong_scaling_keeps_global_batch():
    base = replace(BASE, gas=64)
    r = strong_scaling(SMALL, base, SMNG_P2, EfficiencyParams())
    assert {p.global_batch for p in r.points} == {64}
    assert r.points[0].efficiency == pytest.approx(100.0)


def test_strong_scaling_needs_divisible_batch():
    with pytest.raises(ConfigError):
        strong_scaling(SMALL, replace(BASE, gas=12), SMNG_P2, EfficiencyParams())


def test_free_communication_weak_scaling_is_perfect():
    r = weak_scaling(SMALL, BASE, FREE_COMM, EfficiencyParams())
    for p in r.points:
        assert p.efficiency == pytest.approx(100.0, rel=1e-9)


def test_strong_scaling_loses_to_bubble_without_comm():
    # With free links the only loss is the growing bubble as gas shrinks.
    base = replace(BASE, gas=64)
    r = strong_scaling(SMALL, base, FREE_COMM, EfficiencyParams())
    effs = [p.efficiency for p in r.points]
    assert effs == sorted(effs, reverse=True)
    # pp=2: bubble fraction 1/(gas+1); efficiency ratio of step times.
    expected = 100 * (64 + 1) / 64 / ((8 + 1) / 8)
    assert r.efficiency_at(64) == pytest.approx(expected, rel=1e-9)


def test_setup_strong_base_matches_largest_weak_point(gpt175b):
    s = ScalingSetup(gpt175b, SMNG_P2)
    assert s.strong_base.global_batch == 2400
    e = EfficiencyParams(0.2, 10.0)
    assert s.weak(e).points[-1].step_time == s.strong(e).points[-1].step_time


def test_target_validation():
    with pytest.raises(ConfigError):
        Target("weak", 90.0)
    with pytest.raises(ConfigError):
        Target("latency", 1.0)


def test_calibration_recovers_known_parameters(gpt175b):
    s = ScalingSetup(gpt175b, SMNG_P2)
    truth = EfficiencyParams(0.3, 20.0)
    targets = [
        Target("weak", predict(Target("weak", 0, 1024), s, truth), 1024, 1e-3),
        Target("strong", predict(Target("strong", 0, 1024), s, truth), 1024, 1e-3),
        Target("throughput", predict(Target("throughput", 0), s, truth), None, 1e-3),
    ]
    res = calibrate(targets, s, start=EfficiencyParams(0.5, 1.0))
    assert res.converged
    assert res.params.compute_efficiency == pytest.approx(0.3, rel=1e-3)
    assert res.params.dp_bw_scale == pytest.approx(20.0, rel=1e-2)


def test_calibration_fixed_point(gpt175b):
    s = ScalingSetup(gpt175b, SMNG_P2)
    truth = EfficiencyParams(0.4, 5.0)
    targets = [Target("throughput", predict(Target("throughput", 0), s, truth), None, 1e-6)]
    res = calibrate(targets, s, start=truth, free=("compute_efficiency",))
    assert res.params == truth and res.sse == 0.0


def test_calibration_reports_failure(gpt175b):
    s = ScalingSetup(gpt175b, SMNG_P2)
    # 500 TFLOP/s per tile exceeds the power-capped peak at any efficiency.
    res = calibrate([Target("throughput", 500.0, tolerance=1.0)], s, free=("compute_efficiency",))
    assert not res.converged
    assert res.params.compute_efficiency == pytest.approx(1.0)


def test_calibration_underdetermined(gpt175b):
    with pytest.raises(ConfigError):
        calibrate(DEFAULT_TARGETS[:1], ScalingSetup(gpt175b, SMNG_P2))


def test_default_fit_is_deterministic(gpt175b):
    s = ScalingSetup(gpt175b, SMNG_P2)
    a, b = calibrate(DEFAULT_TARGETS, s), calibrate(DEFAULT_TARGETS, s)
    assert a == b
    assert REFERENCE_BEST.world_tiles == 128
