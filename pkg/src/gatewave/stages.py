"""Behavioral models of the active driver stages.

Digital isolator, complementary Si totem-pole (with penetration current) and
GaN push-pull, plus a first-order thermal network. Device conduction is a
gate-controlled conductance ``g(x) = S(x / x_full) / ron`` where ``x`` is the
gate overdrive and ``S`` the cubic smoothstep: exactly zero below threshold,
continuously differentiable, exactly ``1/ron`` at full enhancement. The peak
slope ``dg/dx`` equals the model's ``transconductance_s``.

Default values are the shipped Prototype-A calibration (fit so the assembled
chain reproduces measured supply currents and waveform extremes) or
datasheet-typical numbers; none of them is a measurement.
"""

import math
from dataclasses import dataclass

import numpy as np


def smoothstep(u):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * (3.0 - 2.0 * u)


def conductance(overdrive, ron, gm):
    """Channel conductance (S) at gate overdrive ``overdrive`` (V)."""
    x_full = 1.5 / (ron * gm)
    return smoothstep(overdrive / x_full) / ron


def _check_positive(obj, *names):
    for name in names:
        if not getattr(obj, name) > 0:
            raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class IsolatorModel:
    prop_delay_s: float = 10e-9
    out_resistance_ohm: float = 185.5  # calibrated
    slew_limit_v_per_s: float = 1.0e8  # calibrated
    rail_v: float = 3.5
    self_cap_f: float = 20e-12
    input_threshold_v: float = 2.5  # half of the 5 V input-side rail
    static_current_a: float = 1e-3

    def __post_init__(self):
        _check_positive(self, "prop_delay_s", "out_resistance_ohm", "slew_limit_v_per_s",
                        "rail_v", "self_cap_f")
        if not 2.5 <= self.rail_v <= 6.0:
            raise ValueError("rail_v must lie in [2.5, 6.0] V")
        if self.static_current_a < 0:
            raise ValueError("static_current_a must be >= 0")


@dataclass(frozen=True)
class TotemPoleModel:
    vth_v: float = 0.97  # calibrated
    ron_ohm: float = 2.85  # calibrated
    transconductance_s: float = 0.14  # calibrated
    input_cap_f: float = 150e-12
    cross_cond_sat_a: float = 20.0  # calibrated; inactive at these currents
    rail_v: float = 3.5
    loop_l_h: float = 50e-9  # calibrated gate-loop inductance to the GaN gates
    out_cap_f: float = 50e-12  # device output capacitance at the totem node

    def __post_init__(self):
        _check_positive(self, "vth_v", "ron_ohm", "transconductance_s", "input_cap_f",
                        "cross_cond_sat_a", "rail_v", "out_cap_f")
        if self.loop_l_h < 0:
            raise ValueError("loop_l_h must be >= 0")


@dataclass(frozen=True)
class GanPushPullModel:
    vth_v: float = 1.4
    ron_ohm: float = 0.1
    transconductance_s: float = 20.0
    ciss_f: float = 220e-12
    coss_f: float = 300e-12
    rail_v: float = 18.0
    parasitic_l_h: float = 20e-9
    parasitic_r_ohm: float = 5.0  # damping of the output loop (layout + probe)
    cross_cond_sat_a: float = 20.0
    leak_s: float = 1e-9  # off-state leakage keeps the floating output defined

    def __post_init__(self):
        _check_positive(self, "vth_v", "ron_ohm", "transconductance_s", "ciss_f", "rail_v",
                        "cross_cond_sat_a")
        if self.parasitic_l_h < 0 or self.parasitic_r_ohm < 0 or self.coss_f < 0:
            raise ValueError("parasitic_l_h, parasitic_r_ohm and coss_f must be >= 0")
        if self.leak_s < 0:
            raise ValueError("leak_s must be >= 0")


@dataclass(frozen=True)
class ThermalModel:
    # (100 - 25) K / (4.5 V * 0.2 A): 0.9 W puts the junction at the 100 C limit
    r_th_k_per_w: float = 75.0 / 0.9
    c_th_j_per_k: float = 0.01
    ambient_c: float = 25.0
    runaway_threshold_c: float = 100.0

    def __post_init__(self):
        _check_positive(self, "r_th_k_per_w", "c_th_j_per_k")
        if not self.runaway_threshold_c > self.ambient_c:
            raise ValueError("runaway_threshold_c must exceed ambient_c")


def isolator_rhs(model, v_logic_in, v_out, load_cap_f=0.0):
    """Output slope and rail current of an isolator channel.

    ``v_logic_in`` is the already-delayed input; it commands the rail when it
    is at or above ``model.input_threshold_v``. ``load_cap_f`` is the
    downstream input capacitance added to the pin capacitance.

    Returns ``(dv_out_dt, i_supply)``.
    """
    c_total = model.self_cap_f + load_cap_f
    pull_up = v_logic_in >= model.input_threshold_v
    v_target = model.rail_v if pull_up else 0.0
    dv = (v_target - v_out) / (model.out_resistance_ohm * c_total)
    slew = model.slew_limit_v_per_s
    dv = min(max(dv, -slew), slew)
    i_supply = max(c_total * dv, 0.0) if pull_up else 0.0
    return dv, i_supply


def stacked_currents(rail_v, g_up, g_down, v_out, sat_a):
    i_up = g_up * (rail_v - v_out)
    i_down = g_down * v_out
    i_shoot = sat_a * math.tanh(min(g_up, g_down) * rail_v / sat_a)
    return i_up, i_down, i_shoot


def totem_currents(model, v_ctrl, v_out):
    """Currents of the complementary Si pair at input ``v_ctrl``.

    The upper (P) device conducts on ``rail - v_ctrl - vth``, the lower (N)
    device on ``v_ctrl - vth``. ``i_shoot`` is the rail-to-ground penetration
    current, smoothly capped at ``cross_cond_sat_a``.

    Returns ``(i_up, i_down, i_shoot)``.
    """
    g_up = conductance(model.rail_v - v_ctrl - model.vth_v, model.ron_ohm,
                       model.transconductance_s)
    g_down = conductance(v_ctrl - model.vth_v, model.ron_ohm, model.transconductance_s)
    return stacked_currents(model.rail_v, g_up, g_down, v_out, model.cross_cond_sat_a)


def gan_currents(model, v_gate_hi, v_gate_lo, v_sw):
    """``(i_up, i_down, i_shoot)`` of the GaN pair; gate voltages are gate-source."""
    g_up = conductance(v_gate_hi - model.vth_v, model.ron_ohm, model.transconductance_s)
    g_down = conductance(v_gate_lo - model.vth_v, model.ron_ohm, model.transconductance_s)
    return stacked_currents(model.rail_v, g_up, g_down, v_sw, model.cross_cond_sat_a)


def pushpull_rhs(model, v_gate_hi, v_gate_lo, out_state, load_cap_f):
    """Derivatives of the push-pull output driving a capacitive load.

    With ``parasitic_l_h > 0`` the state is ``(v_sw, i_l, v_load)``: the
    switch node (capacitance ``coss_f``) feeds the load capacitance through
    the series parasitic R-L. With zero inductance the state is ``(v_sw,)``
    and the switch node carries ``coss_f + load_cap_f``.
    """
    v_sw = out_state[0]
    i_up, i_down, _ = gan_currents(model, v_gate_hi, v_gate_lo, v_sw)
    i_node = i_up - i_down - model.leak_s * v_sw
    if model.parasitic_l_h > 0:
        _, i_l, v_load = out_state
        dv_sw = (i_node - i_l) / model.coss_f
        di_l = (v_sw - v_load - model.parasitic_r_ohm * i_l) / model.parasitic_l_h
        dv_load = i_l / load_cap_f
        return np.array([dv_sw, di_l, dv_load])
    return np.array([i_node / (model.coss_f + load_cap_f)])


def thermal_step(model, t_junction_c, power_w, dt):
    """Exact first-order RC update over ``dt``; returns ``(t_next_c, runaway)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t_fix = model.ambient_c + model.r_th_k_per_w * power_w
    decay = math.exp(-dt / (model.r_th_k_per_w * model.c_th_j_per_k))
    t_next = t_fix + (t_junction_c - t_fix) * decay
    return t_next, t_next >= model.runaway_threshold_c


def avg_supply_current(model, iso, f, rail_v, spec, gan=None, opts=None):
    """Mean current drawn from one isolator/totem-pole rail at periodic steady state.

    Simulates the low-side isolator + totem-pole + GaN gate sub-chain at
    frequency ``f`` with both stages on ``rail_v`` and averages the rail
    current (isolator output driver, static draw, totem-pole pull-up and
    penetration current) over the final period.
    """
    from dataclasses import replace

    from .chain import ChainSystem
    from .solver import run_to_pss

    gan = gan if gan is not None else GanPushPullModel()
    iso = replace(iso, rail_v=rail_v)
    model = replace(model, rail_v=rail_v)
    spec = replace(spec, frequency_hz=f)
    system = ChainSystem(spec, iso, iso, model, model, gan, load=None, sides=("lo",))
    trace, _ = run_to_pss(system, spec.period, opts)
    return trace.mean("i_rail_dsil")
