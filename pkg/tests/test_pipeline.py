import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plan3d import pipeline
from plan3d._schedule_py import op_at
from plan3d.errors import ConfigError
from plan3d.pipeline import (
    KERNELS, StageTiming, bubble_closed_form, simulate, simulate_1f1b, simulate_gpipe,
)

UNIT = StageTiming(1.0, 2.0, 0.0)


def test_small_worked_example():
    r = simulate_1f1b(4, 4, UNIT)
    assert r.makespan == 21.0  # (m + pp - 1) * (f + b)
    assert r.bubble_fraction == pytest.approx(3 / 7, abs=1e-12)
    r = simulate_1f1b(2, 1, StageTiming(1.0, 1.0))
    assert r.makespan == 4.0 and r.bubble_fraction == pytest.approx(0.5)


def test_single_stage_has_no_bubble():
    r = simulate_1f1b(1, 7, UNIT)
    assert r.makespan == 21.0 and r.bubble_fraction == 0.0


@pytest.mark.parametrize("pp,m", [(1, 1), (2, 3), (4, 16), (8, 2), (13, 40)])
def test_bubble_matches_closed_form(pp, m):
    for t in (UNIT, StageTiming(0.3), StageTiming(1.0, 1.0)):
        r = simulate_1f1b(pp, m, t)
        assert r.bubble_fraction == pytest.approx(bubble_closed_form(pp, m), abs=1e-12)


def test_gpipe_matches_1f1b_makespan():
    for pp, m in [(4, 8), (3, 1), (6, 6)]:
        assert simulate_gpipe(pp, m, UNIT).makespan == pytest.approx(simulate_1f1b(pp, m, UNIT).makespan)


def test_1f1b_caps_in_flight_microbatches():
    pp, m = 4, 12
    r = simulate_1f1b(pp, m, UNIT)
    for k in range(pp):
        # Forwards started before the j-th backward finishes never exceed pp - k ahead.
        for j in range(m):
            in_flight = np.sum(r.starts[k, :, 0] < r.ends[k, j, 1] - 1e-12) - j
            assert in_flight <= pp - k
    g = simulate_gpipe(pp, m, UNIT)
    assert np.all(g.ends[0, :, 0] <= g.starts[0, 0, 1])


def test_op_order():
    ops = [op_at(pipeline.SCHEDULES["1f1b"], 3, 4, 0, i) for i in range(8)]
    # (micro-batch, phase): two warmup forwards on the first of three stages.
    assert ops == [(0, 0), (1, 0), (2, 0), (0, 1), (3, 0), (1, 1), (2, 1), (3, 1)]
    last = [op_at(pipeline.SCHEDULES["1f1b"], 3, 4, 2, i) for i in range(8)]
    assert last == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)]


def _check_log(r, t):
    pp, m = r.pp, r.m
    f, b, c = t.fwd_time, t.bwd_time, t.p2p_time
    assert np.all(r.ends >= 0)
    assert np.allclose(r.ends[:, :, 0] - r.starts[:, :, 0], f)
    assert np.allclose(r.ends[:, :, 1] - r.starts[:, :, 1], b)
    for k in range(pp):
        for j in range(m):
            if k > 0:
                assert r.starts[k, j, 0] >= r.ends[k - 1, j, 0] + c - 1e-9
            if k < pp - 1:
                assert r.starts[k, j, 1] >= r.ends[k + 1, j, 1] + c - 1e-9
            else:
                assert r.starts[k, j, 1] >= r.ends[k, j, 0] - 1e-9
        spans = sorted(zip(r.starts[k].ravel(), r.ends[k].ravel()))
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            assert s1 >= e0 - 1e-9
    assert r.makespan == pytest.approx(r.ends.max())
    log = r.event_log
    assert len(log) == 2 * pp * m
    assert [e.start for e in log] == sorted(e.start for e in log)


timings = st.builds(
    StageTiming, st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.0, 5.0),
)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.integers(1, 24), timings, st.sampled_from(["1f1b", "gpipe"]))
def test_event_log_is_a_valid_schedule(pp, m, t, kind):
    r = simulate(pp, m, t, kind)
    _check_log(r, t)
    assert r.makespan >= m * (t.fwd_time + t.bwd_time) - 1e-9
    assert r.makespan >= pp * (t.fwd_time + t.bwd_time) + 2 * (pp - 1) * t.p2p_time - 1e-9


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 16), st.integers(1, 48), timings, st.sampled_from(["1f1b", "gpipe"]))
def test_backends_agree_bitwise(pp, m, t, kind):
    if "cython" not in KERNELS:
        pytest.skip("compiled kernel not built")
    a = simulate(pp, m, t, kind, backend="python")
    b = simulate(pp, m, t, kind, backend="cython")
    assert a.makespan == b.makespan
    assert np.array_equal(a.starts, b.starts) and np.array_equal(a.ends, b.ends)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 16), st.integers(1, 64))
def test_bubble_decreases_with_m(pp, m):
    assert simulate_1f1b(pp, m + 1, UNIT).bubble_fraction < simulate_1f1b(pp, m, UNIT).bubble_fraction


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 16), st.integers(1, 64))
def test_bubble_nondecreasing_with_pp(pp, m):
    assert simulate_1f1b(pp + 1, m, UNIT).bubble_fraction >= simulate_1f1b(pp, m, UNIT).bubble_fraction


@given(st.integers(1, 32), st.sampled_from([1, 2, 4, 8]))
def test_fixed_ratio_closed_form(pp, ratio):
    # At m = ratio*pp the bubble is (pp-1)/((ratio+1)pp-1), which stays below 1/(ratio+1).
    m = ratio * pp
    assert bubble_closed_form(pp, m) == pytest.approx((pp - 1) / ((ratio + 1) * pp - 1))
    assert bubble_closed_form(pp, m) < 1 / (ratio + 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(1, 20), timings)
def test_deterministic(pp, m, t):
    a, b = simulate_1f1b(pp, m, t), simulate_1f1b(pp, m, t)
    assert a.event_log == b.event_log


def test_p2p_delay_gpipe_adds_one_round_trip():
    for pp, m in [(4, 8), (2, 1), (5, 3)]:
        base = simulate_gpipe(pp, m, UNIT).makespan
        delayed = simulate_gpipe(pp, m, StageTiming(1.0, 2.0, 0.5)).makespan
        assert delayed == pytest.approx(base + 2 * (pp - 1) * 0.5)


def test_p2p_delay_1f1b_hand_trace():
    # Stage 1 runs F0 [1.5,2.5] B0 [2.5,4.5] F1 [4.5,5.5] B1 [5.5,7.5];
    # stage 0 receives B1 at 8.0 and finishes at 10.
    assert simulate_1f1b(2, 2, StageTiming(1.0, 2.0, 0.5)).makespan == 10.0
    # Steady-state round trips stall 1F1B beyond the single fill/drain delay.
    assert simulate_1f1b(4, 8, StageTiming(1.0, 2.0, 0.5)).makespan > 33.0 + 3.0


@pytest.mark.parametrize("args", [(0, 1), (1, 0)])
def test_rejects_empty(args):
    with pytest.raises(ConfigError):
        simulate_1f1b(*args, UNIT)
    with pytest.raises(ConfigError):
        bubble_closed_form(*args)


def test_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        StageTiming(-1.0)
    with pytest.raises(ConfigError):
        simulate(2, 2, UNIT, "interleaved")
