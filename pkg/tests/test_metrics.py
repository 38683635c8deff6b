import math
from dataclasses import replace

import numpy as np
import pytest

from gatewave import metrics
from gatewave.config import load_scenario
from gatewave.errors import GridMismatch, IncompleteCycle
from gatewave.load import OpenLoad
from gatewave.metrics import (PowerStats, WaveformStats, compare_traces, energy_balance,
                              final_period, power_stats, time_above, waveform_stats)
from gatewave.solver import Trace, integrate, run_to_pss
from gatewave.stages import ThermalModel

from oracles import rk4_reference


def sine_trace(amp=2.0, offset=1.0, period=1e-6, n=2001, periods=2):
    t = np.linspace(0, periods * period, periods * (n - 1) + 1)
    y = offset + amp * np.sin(2 * np.pi * t / period)
    return Trace(times=t, node_voltages={"v": y}, branch_currents={}, period=period)


# --- waveform statistics ----------------------------------------------------

def test_sine_extremes_and_transitions():
    tr = sine_trace()
    dt = tr.times[1] - tr.times[0]
    s = waveform_stats(tr, "v", rail_v=2.5)
    assert s.v_max == pytest.approx(3.0, abs=1e-5)
    assert s.v_min == pytest.approx(-1.0, abs=1e-5)
    assert s.avg == pytest.approx(1.0, abs=1e-9)
    assert s.overshoot_v == pytest.approx(0.5, abs=1e-5)
    expected = 2 * math.asin(0.8) / (2 * math.pi) * 1e-6
    assert abs(s.rise_10_90_s - expected) <= dt
    assert abs(s.fall_10_90_s - expected) <= dt
    assert s.measured_duty == pytest.approx(0.5, abs=1e-6)


def test_constant_trace_is_incomplete():
    t = np.linspace(0, 2e-6, 101)
    tr = Trace(times=t, node_voltages={"v": np.full(101, 1.5)}, branch_currents={}, period=1e-6)
    with pytest.raises(IncompleteCycle):
        waveform_stats(tr, "v", rail_v=1.5)


def test_short_trace_is_incomplete():
    tr = sine_trace(periods=1)
    with pytest.raises(IncompleteCycle):
        waveform_stats(tr, "v", rail_v=2.0, period=2e-6)
    no_period = Trace(times=tr.times, node_voltages=tr.node_voltages, branch_currents={})
    with pytest.raises(IncompleteCycle):
        waveform_stats(no_period, "v", rail_v=2.0)


def test_final_period_interpolates_window_start():
    t = np.array([0.0, 0.4, 1.0, 1.5, 2.2])
    y = np.array([0.0, 4.0, 10.0, 15.0, 22.0])
    tr = Trace(times=t, node_voltages={"v": y}, branch_currents={})
    tt, yy = final_period(tr, "v", period=1.0)
    assert tt[0] == pytest.approx(1.2) and yy[0] == pytest.approx(12.0)
    assert tt[-1] == 2.2


def test_time_above_piecewise_linear():
    assert time_above([0, 1, 2], [0, 2, 0], 1.0) == pytest.approx(1.0)
    assert time_above([0, 1], [3, 3], 1.0) == pytest.approx(1.0)


def test_stats_dataclass_invariants():
    with pytest.raises(ValueError):
        WaveformStats(v_max=0.0, v_min=1.0, avg=0.5, overshoot_v=0.0, rise_10_90_s=1e-9,
                      fall_10_90_s=1e-9, measured_duty=0.5)
    with pytest.raises(ValueError):
        PowerStats(stage="dsil", avg_rail_current_a={"dsil": -0.1}, dissipation_w={"dsil": 0})


# --- trace comparison ---------------------------------------------------------

def test_compare_identity_and_symmetry():
    a = sine_trace(amp=2.0)
    b = sine_trace(amp=2.1, n=1501)
    assert compare_traces(a, a, scale=1.0) == 0.0
    d_ab = compare_traces(a, b, scale=1.0)
    assert d_ab == compare_traces(b, a, scale=1.0)
    assert d_ab == pytest.approx(0.1, rel=1e-3)


def test_compare_needs_overlap():
    a = sine_trace()
    b = a.shifted(10e-6)
    with pytest.raises(GridMismatch):
        compare_traces(a, b)
    c = Trace(times=a.times, node_voltages={"w": a.series("v")}, branch_currents={})
    with pytest.raises(GridMismatch):
        compare_traces(a, c)


# --- chain power bookkeeping ----------------------------------------------------

@pytest.fixture(scope="module")
def fig10_pss():
    sc = load_scenario("fig10_hardswitch_20mhz")
    tr, _ = run_to_pss(sc.system(), sc.pwm.period, sc.solver)
    return sc, tr


def test_energy_identity_at_pss(fig10_pss):
    _, tr = fig10_pss
    bal = energy_balance(tr)
    for group in ("dsih", "dsil", "total"):
        supplied, dissipated = bal[group]
        assert dissipated == pytest.approx(supplied, rel=0.005)
    # GaN and link exchange energy through the Miller capacitance
    joint_sup = bal["dgan"][0] + bal["link"][0]
    joint_dis = bal["dgan"][1] + bal["link"][1]
    assert joint_dis == pytest.approx(joint_sup, rel=0.005)


def test_power_stats_fields(fig10_pss):
    sc, tr = fig10_pss
    ps = power_stats(tr, "dsil", sc.thermal)
    assert set(ps.avg_rail_current_a) == {"dsih", "dsil", "dgan", "link"}
    assert ps.rail_current_a * sc.rails["dsil"] == pytest.approx(ps.stage_dissipation_w, rel=0.005)
    assert ps.junction_temp_c == pytest.approx(
        sc.thermal.ambient_c + sc.thermal.r_th_k_per_w * ps.stage_dissipation_w)
    assert ps.runaway == (ps.junction_temp_c >= sc.thermal.runaway_threshold_c)
    assert ps.penetration_charge_c >= 0
    with pytest.raises(KeyError):
        power_stats(tr, "nope", sc.thermal)


def test_runaway_follows_threshold(fig10_pss):
    sc, tr = fig10_pss
    cold = power_stats(tr, "dsil", ThermalModel(r_th_k_per_w=1.0))
    hot = power_stats(tr, "dsil", ThermalModel(r_th_k_per_w=1e6))
    assert not cold.runaway and hot.runaway


def test_solver_matches_fine_rk4_over_one_period(fig10_pss):
    sc, tr = fig10_pss
    system = sc.system()
    t0, period = tr.times[-1], sc.pwm.period
    main = integrate(system, t0, t0 + period, sc.solver, tr.final_state)
    ref = rk4_reference(system, t0, t0 + period, tr.final_state, dt=1e-12, record_every=10)
    assert compare_traces(main, ref) < 0.005


@pytest.fixture(scope="module")
def open_load_1mhz():
    sc = load_scenario("prototype_a")
    sc = replace(sc, load=OpenLoad(), pwm=replace(sc.pwm, frequency_hz=1e6))
    tr, _ = run_to_pss(sc.system(), sc.pwm.period, sc.solver)
    return sc, tr


def test_upper_device_duty_approaches_conduction_duty(open_load_1mhz):
    # the upper GaN device conducts while the high-side input is low
    sc, tr = open_load_1mhz
    s = waveform_stats(tr, "v_ggan_hi", rail_v=sc.isolator_hi.rail_v)
    target = 1 - sc.pwm.duty_high
    assert abs(s.measured_duty - target) <= 0.02 * target


def test_open_output_holds_through_dead_time(open_load_1mhz):
    # nothing pulls a capacitive output during dead time, so it stays high for
    # the conduction interval plus one dead time: (1 - D_h + D_l) / 2
    sc, tr = open_load_1mhz
    s = waveform_stats(tr, "v_out", rail_v=sc.pushpull.rail_v)
    target = (1 - sc.pwm.duty_high + sc.pwm.duty_low) / 2
    assert abs(s.measured_duty - target) <= 0.02 * target


# --- CSV rows -------------------------------------------------------------------

def test_stats_csv_header_and_format(tmp_path):
    s = waveform_stats(sine_trace(), "v", rail_v=2.5)
    rows = [metrics.stats_row("sc", "v", "pwm.frequency_hz", 1e6, wave=s, n_periods=3)]
    path = tmp_path / "stats.csv"
    metrics.write_stats_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(metrics.STATS_HEADER)
    cells = dict(zip(metrics.STATS_HEADER, lines[1].split(",")))
    assert cells["value"] == "1000000"
    assert cells["status"] == "ok"
    assert float(cells["v_max"]) == pytest.approx(s.v_max, rel=1e-11)
