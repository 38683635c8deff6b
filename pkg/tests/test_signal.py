import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gatewave.errors import OverlapError
from gatewave.signal import (FALL, HIGH, LOW, RISE, PwmSpec, dead_time, edge_schedule,
                             eval_control, logic_state, threshold_crossings)


def test_high_side_is_high_a_quarter_period_in():
    spec = PwmSpec(frequency_hz=20e6, duty_high=0.55, duty_low=0.55)
    vh, _ = eval_control(spec, 0.25 * spec.period)
    assert vh == 5.0


def test_flat_segment_hits_logic_high_exactly():
    spec = PwmSpec(frequency_hz=1e6, duty_high=1 - 1e-3, duty_low=0.5, rise_fall_s=0.0)
    for t in np.linspace(0.0, 0.99 * spec.duty_high * spec.period, 17):
        assert eval_control(spec, t)[0] == spec.logic_high_v


def test_mean_matches_trapezoid_area():
    spec = PwmSpec(frequency_hz=1e6, duty_high=0.6, duty_low=0.6, rise_fall_s=1e-9)
    ts = np.linspace(0.0, spec.period, 10001)
    vh = np.array([eval_control(spec, t)[0] for t in ts])
    mean = np.trapezoid(vh, ts) / spec.period
    assert mean == pytest.approx(0.6 * 5.0, rel=1e-3)


@pytest.mark.parametrize("dh,dl,f,expected", [
    (0.5, 0.5, 20e6, 0.0),
    (0.55, 0.55, 20e6, 2.5e-9),
    (0.6, 0.6, 14e6, 0.2 / 2 / 14e6),
])
def test_dead_time(dh, dl, f, expected):
    spec = PwmSpec(frequency_hz=f, duty_high=dh, duty_low=dl)
    assert dead_time(spec) == pytest.approx(expected, abs=1e-18)


def test_overlap_rejected():
    with pytest.raises(OverlapError):
        PwmSpec(duty_high=0.3, duty_low=0.3)


@pytest.mark.parametrize("kwargs", [
    {"frequency_hz": 0.0}, {"duty_high": 1.0}, {"duty_low": 0.0}, {"phase_offset": 1.0},
    {"rise_fall_s": -1e-9}, {"logic_high_v": 0.0}, {"rise_fall_s": 30e-9},
])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        PwmSpec(**kwargs)


def test_one_period_has_two_edges_per_side():
    spec = PwmSpec(frequency_hz=20e6)
    edges = edge_schedule(spec, 0.0, spec.period)
    assert len(edges) == 4
    for side in (HIGH, LOW):
        assert sorted(d for _, s, d in edges if s == side) == [FALL, RISE]


def test_ten_periods_at_14mhz_and_dead_time_gaps():
    spec = PwmSpec(frequency_hz=14e6, duty_high=0.6, duty_low=0.6)
    edges = edge_schedule(spec, 0.0, 10 * spec.period)
    assert len(edges) == 40
    dt = dead_time(spec)
    highs = [t for t, s, d in edges if (s, d) == (HIGH, RISE)]
    lows = [t for t, s, d in edges if (s, d) == (LOW, FALL)]
    # each high-side turn-off command is followed by the low-side turn-on after dt
    for th, tl in zip(highs, lows):
        assert tl - th == pytest.approx(dt, rel=1e-9)


def test_window_before_first_edge_is_empty():
    spec = PwmSpec(frequency_hz=20e6)
    assert edge_schedule(spec, 0.1e-9, 0.2e-9) == []


def test_edge_schedule_rejects_empty_interval():
    with pytest.raises(ValueError):
        edge_schedule(PwmSpec(), 1e-9, 1e-9)


def test_zero_dead_time_ties_put_high_side_first():
    spec = PwmSpec(frequency_hz=20e6, duty_high=0.5, duty_low=0.5)
    edges = edge_schedule(spec, 0.0, spec.period)
    assert edges[0][0] == edges[1][0] == 0.0
    assert edges[0][1] == HIGH


def test_threshold_crossing_is_mid_ramp():
    spec = PwmSpec(frequency_hz=20e6, rise_fall_s=2e-9)
    first = threshold_crossings(spec, 0.0, spec.period)[0]
    assert first == (pytest.approx(1e-9), HIGH, RISE)
    assert not logic_state(spec, 0.9e-9)[0]
    assert logic_state(spec, 1.1e-9)[0]


spec_strategy = st.builds(
    PwmSpec,
    frequency_hz=st.floats(1e5, 5e7),
    duty_high=st.floats(0.5, 0.8),
    duty_low=st.floats(0.5, 0.8),
    phase_offset=st.just(0.0),
    rise_fall_s=st.floats(0.0, 1e-9),
)


@settings(max_examples=60, deadline=None)
@given(spec=spec_strategy, frac=st.floats(0.0, 1.0), k=st.integers(1, 50))
def test_periodicity(spec, frac, k):
    t = frac * spec.period
    if spec.rise_fall_s == 0:
        # an ideal step is discontinuous at the edge instant itself
        offsets = spec.edge_offsets().values()
        assume(all(abs(t - o) > 1e-9 * spec.period for o in offsets))
        assume(abs(t - spec.period) > 1e-9 * spec.period)
    a = eval_control(spec, t)
    b = eval_control(spec, t + k * spec.period)
    # shifting by k periods rounds t by a few ulps; a steep ramp amplifies that
    tol = 1e-9
    if spec.rise_fall_s > 0:
        tol += 8 * np.spacing((k + 1) * spec.period) / spec.rise_fall_s
    assert a[0] == pytest.approx(b[0], abs=tol)
    assert a[1] == pytest.approx(b[1], abs=tol)


@settings(max_examples=60, deadline=None)
@given(spec=spec_strategy)
def test_conduction_commands_never_overlap(spec):
    # a side conducts while its input is low; with dead time > rise_fall the
    # two "input low" intervals are disjoint
    if not dead_time(spec) > spec.rise_fall_s:
        return
    ts = np.linspace(0.0, 2 * spec.period, 4001)
    for t in ts:
        vh, vl = eval_control(spec, t)
        assert not (vh < spec.logic_high_v and vl < spec.logic_high_v and
                    vh == spec.logic_low_v and vl == spec.logic_low_v)
    edges = edge_schedule(spec, 0.0, 3 * spec.period)
    on = {HIGH: None, LOW: None}
    intervals = {HIGH: [], LOW: []}
    for t, side, d in edges:
        if d == FALL:
            on[side] = t
        elif on[side] is not None:
            intervals[side].append((on[side], t + spec.rise_fall_s))
            on[side] = None
    for a0, a1 in intervals[HIGH]:
        for b0, b1 in intervals[LOW]:
            assert a1 <= b0 + 1e-15 or b1 <= a0 + 1e-15


@settings(max_examples=40, deadline=None)
@given(spec=spec_strategy, n=st.integers(1, 30))
def test_edge_count(spec, n):
    edges = edge_schedule(spec, 0.0, n * spec.period)
    for side in (HIGH, LOW):
        count = sum(1 for _, s, _ in edges if s == side)
        assert abs(count - 2 * n) <= 1
        times = [t for t, s, _ in edges if s == side]
        assert all(b > a for a, b in zip(times, times[1:]))


@settings(max_examples=40, deadline=None)
@given(spec=spec_strategy)
def test_edges_are_monotone(spec):
    if spec.rise_fall_s == 0:
        return
    for t0, side, d in edge_schedule(spec, 0.0, spec.period):
        idx = 0 if side == HIGH else 1
        vals = [eval_control(spec, t0 + u * spec.rise_fall_s)[idx] for u in np.linspace(0, 1, 11)]
        diffs = np.diff(vals)
        assert np.all(diffs >= -1e-12) if d == RISE else np.all(diffs <= 1e-12)
        assert not math.isnan(vals[0])
