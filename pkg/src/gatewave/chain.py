"""The assembled gate-drive chain as an ODE system for :mod:`gatewave.solver`.

Per driven side (``hi`` / ``lo``): isolator output node, totem-pole node and
gate-loop current (when the loop inductance is non-zero), GaN gate node.
With both sides present the GaN push-pull output and its load follow.

The high-side GaN gate voltage is taken gate-to-source: its isolator and
totem-pole sit on a floating rail referenced to the switch node.

Rails are grouped by supply: ``dsih`` / ``dsil`` (isolator output side and
totem-pole), ``dgan`` (push-pull, output parasitics and SiC gate
resistance) and ``link`` (hard-switching load).
"""

import numpy as np

from .load import HardSwitchCircuit, OpenLoad, device_derivatives
from .signal import edge_schedule, eval_control, logic_state, threshold_crossings
from .solver import newton_solve
from .stages import conductance, stacked_currents

_SIDE_INDEX = {"hi": 0, "lo": 1}
_SIDE_NAME = {"hi": "high", "lo": "low"}
_RAIL = {"hi": "dsih", "lo": "dsil"}


class _Side:
    def __init__(self, name, iso, totem, gan, base):
        self.name = name
        self.iso = iso
        self.totem = totem
        self.rail = _RAIL[name]
        self.c_iso = iso.self_cap_f + totem.input_cap_f
        self.loop = totem.loop_l_h > 0
        self.ciss = gan.ciss_f
        self.i_iso = base
        if self.loop:
            self.i_tp, self.i_lp, self.i_g = base + 1, base + 2, base + 3
            self.size = 4
        else:
            self.i_g = base + 1
            self.size = 2
        self.c_out = totem.out_cap_f if self.loop else totem.out_cap_f + gan.ciss_f

    def names(self):
        s = self.name
        if self.loop:
            return [f"v_gsi_{s}", f"v_tp_{s}", f"i_loop_{s}", f"v_ggan_{s}"]
        return [f"v_gsi_{s}", f"v_ggan_{s}"]

    def scales(self):
        r = self.iso.rail_v
        return [r, r, 1.0, r] if self.loop else [r, r]

    def evaluate(self, xs, dx, logic_high):
        """Fill derivatives; return ``(rail current, shoot current, dissipation)``."""
        iso, tp = self.iso, self.totem
        rail = iso.rail_v
        v = xs[self.i_iso]
        v_target = rail if logic_high else 0.0
        dv = (v_target - v) / (iso.out_resistance_ohm * self.c_iso)
        slew = iso.slew_limit_v_per_s
        dv = slew if dv > slew else (-slew if dv < -slew else dv)
        dx[self.i_iso] = dv
        i_c = self.c_iso * dv
        i_sup = (i_c if i_c > 0 else 0.0) if logic_high else 0.0

        v_o = xs[self.i_tp] if self.loop else xs[self.i_g]
        g_up = conductance(tp.rail_v - v - tp.vth_v, tp.ron_ohm, tp.transconductance_s)
        g_dn = conductance(v - tp.vth_v, tp.ron_ohm, tp.transconductance_s)
        i_up, i_dn, i_sh = stacked_currents(tp.rail_v, g_up, g_dn, v_o, tp.cross_cond_sat_a)
        if self.loop:
            i_lp = xs[self.i_lp]
            dx[self.i_tp] = (i_up - i_dn - i_lp) / self.c_out
            dx[self.i_lp] = (v_o - xs[self.i_g]) / tp.loop_l_h
            dx[self.i_g] = i_lp / self.ciss
        else:
            dx[self.i_g] = (i_up - i_dn) / self.c_out
        i_rail = i_sup + iso.static_current_a + i_up + i_sh
        p = (i_c * (v_target - v) + iso.static_current_a * rail
             + i_up * (tp.rail_v - v_o) + i_dn * v_o + i_sh * tp.rail_v)
        return i_rail, i_sh, p


class ChainSystem:
    """Isolators, totem-poles, GaN push-pull and load as one ODE system.

    ``sides`` selects which driven sides are simulated. The push-pull stage
    and ``load`` are present only when both sides are; ``load`` is a
    :class:`~gatewave.load.HardSwitchCircuit` or
    :class:`~gatewave.load.OpenLoad` (default).
    """

    def __init__(self, pwm, isolator_hi, isolator_lo, totem_hi, totem_lo, pushpull,
                 load=None, sides=("hi", "lo")):
        self.pwm = pwm
        self.pushpull = pushpull
        self.sides = []
        base = 0
        models = {"hi": (isolator_hi, totem_hi), "lo": (isolator_lo, totem_lo)}
        for name in ("hi", "lo"):
            if name in sides:
                iso, tp = models[name]
                side = _Side(name, iso, tp, pushpull, base)
                self.sides.append(side)
                base += side.size
        names, scales = [], []
        for side in self.sides:
            names += side.names()
            scales += side.scales()
        self.rails = {s.rail: s.iso.rail_v for s in self.sides}
        self.full = len(self.sides) == 2
        self.load = None
        if self.full:
            self.load = load if load is not None else OpenLoad()
            self.hard = isinstance(self.load, HardSwitchCircuit)
            pp = pushpull
            self.has_l = pp.parasitic_l_h > 0
            self.rails["dgan"] = pp.rail_v
            self.i_sw = base
            names.append("v_sw")
            scales.append(pp.rail_v)
            base += 1
            if self.has_l:
                self.i_l = base
                names.append("i_l")
                scales.append(1.0)
                base += 1
            if self.hard:
                self.i_gs, self.i_ds = base, base + 1
                names += ["v_gs", "v_ds"]
                scales += [pp.rail_v, self.load.v_link_v]
                base += 2
                self.rails["link"] = self.load.v_link_v
                self.r_gate = self.load.r_gate_total + (0.0 if self.has_l else pp.parasitic_r_ohm)
                if not self.has_l and pp.coss_f <= 0:
                    raise ValueError("coss_f must be positive when the output drives a resistive gate")
            else:
                if self.has_l:
                    self.i_out = base
                    names.append("v_out")
                    scales.append(pp.rail_v)
                    base += 1
                elif pp.coss_f + self.load.c_load_f <= 0:
                    raise ValueError("output node needs capacitance")
        elif load is not None:
            raise ValueError("a load needs both driver sides")
        self.n = base
        self.state_names = tuple(names)
        self.state_scale = np.array(scales, dtype=float)

    # --- discrete inputs -------------------------------------------------
    def mode_at(self, t):
        out = [True, True]
        for side in self.sides:
            t_in = t - side.iso.prop_delay_s
            if t_in >= 0:
                out[_SIDE_INDEX[side.name]] = logic_state(self.pwm, t_in)[_SIDE_INDEX[side.name]]
        return tuple(out)

    def breakpoints(self, t0, t1):
        bps = [(t, f"edge {side} {d}") for t, side, d in edge_schedule(self.pwm, t0, t1)]
        for side in self.sides:
            delay = side.iso.prop_delay_s
            for t, s, d in threshold_crossings(self.pwm, t0 - delay, t1 - delay):
                if s == _SIDE_NAME[side.name] and t >= 0:
                    bps.append((t + delay, f"isolator {side.name} {d}"))
        bps.sort(key=lambda e: e[0])
        return [(t, lab) for t, lab in bps if t0 < t < t1]

    # --- dynamics --------------------------------------------------------
    def _evaluate(self, x, mode):
        xs = x.tolist() if isinstance(x, np.ndarray) else list(x)
        dx = [0.0] * self.n
        aux = {}
        for side in self.sides:
            aux[side.name] = side.evaluate(xs, dx, mode[_SIDE_INDEX[side.name]])
        if self.full:
            aux["pp"] = self._pushpull(xs, dx)
        return dx, xs, aux

    def _pushpull(self, xs, dx):
        pp = self.pushpull
        v_ghi = xs[self.sides[0].i_g]
        v_glo = xs[self.sides[1].i_g]
        v_sw = xs[self.i_sw]
        g_up = conductance(v_ghi - pp.vth_v, pp.ron_ohm, pp.transconductance_s)
        g_dn = conductance(v_glo - pp.vth_v, pp.ron_ohm, pp.transconductance_s)
        i_up, i_dn, i_sh = stacked_currents(pp.rail_v, g_up, g_dn, v_sw, pp.cross_cond_sat_a)
        i_node = i_up - i_dn - pp.leak_s * v_sw
        p_gan = i_up * (pp.rail_v - v_sw) + i_dn * v_sw + i_sh * pp.rail_v + pp.leak_s * v_sw * v_sw
        res = {"i_rail": i_up + i_sh, "i_shoot": i_sh}
        load = self.load
        if self.hard:
            v_gs, v_ds = xs[self.i_gs], xs[self.i_ds]
            if self.has_l:
                i_gate = xs[self.i_l]
                v_pin = v_gs + i_gate * load.r_gate_total
                dx[self.i_sw] = (i_node - i_gate) / pp.coss_f
                dx[self.i_l] = (v_sw - v_pin - pp.parasitic_r_ohm * i_gate) / pp.parasitic_l_h
                p_par = pp.parasitic_r_ohm * i_gate * i_gate + load.r_gate_total * i_gate * i_gate
            else:
                i_gate = (v_sw - v_gs) / self.r_gate
                v_pin = v_gs + i_gate * load.r_gate_total
                dx[self.i_sw] = (i_node - i_gate) / pp.coss_f
                p_par = self.r_gate * i_gate * i_gate
            dvg, dvd, i_ch, i_r = device_derivatives(load, v_gs, v_ds, i_gate)
            dx[self.i_gs] = dvg
            dx[self.i_ds] = dvd
            res.update(i_out=i_gate, v_out=v_pin, i_ch=i_ch, i_r=i_r,
                       p_link=i_r * i_r * load.r_limit_ohm + i_ch * v_ds)
        else:
            if self.has_l:
                i_l = xs[self.i_l]
                v_out = xs[self.i_out]
                dx[self.i_sw] = (i_node - i_l) / pp.coss_f
                dx[self.i_l] = (v_sw - v_out - pp.parasitic_r_ohm * i_l) / pp.parasitic_l_h
                dx[self.i_out] = i_l / load.c_load_f
                p_par = pp.parasitic_r_ohm * i_l * i_l
                res.update(i_out=i_l, v_out=v_out)
            else:
                c = pp.coss_f + load.c_load_f
                dx[self.i_sw] = i_node / c
                p_par = 0.0
                res.update(i_out=i_node * load.c_load_f / c, v_out=v_sw)
        res["p_dgan"] = p_gan + p_par
        return res

    def rhs(self, t, x, mode):
        dx, _, _ = self._evaluate(x, mode)
        return np.array(dx)

    def outputs(self, t, x, mode):
        _, xs, aux = self._evaluate(x, mode)
        nodes = {name: v for name, v in zip(self.state_names, xs) if name[0] == "v"}
        vh, vl = _control_values(self.pwm, t)
        nodes["v_in_hi"], nodes["v_in_lo"] = vh, vl
        branches = {name: v for name, v in zip(self.state_names, xs) if name[0] == "i"}
        powers = {}
        total = 0.0
        for side in self.sides:
            i_rail, i_sh, p = aux[side.name]
            branches[f"i_rail_{side.rail}"] = i_rail
            branches[f"i_shoot_{side.rail}"] = i_sh
            powers[f"p_{side.rail}"] = p
            total += p
        if self.full:
            pp = aux["pp"]
            branches["i_rail_dgan"] = pp["i_rail"]
            branches["i_shoot_dgan"] = pp["i_shoot"]
            branches["i_out"] = pp["i_out"]
            nodes["v_out"] = pp["v_out"]
            powers["p_dgan"] = pp["p_dgan"]
            total += pp["p_dgan"]
            if self.hard:
                branches["i_rail_link"] = pp["i_r"]
                branches["i_ch"] = pp["i_ch"]
                powers["p_link"] = pp["p_link"]
                total += pp["p_link"]
        powers["p_total"] = total
        return nodes, branches, powers

    # --- initial condition -----------------------------------------------
    def dc_guess(self):
        x = np.zeros(self.n)
        for side in self.sides:
            x[side.i_iso] = side.iso.rail_v
        if self.full and self.hard:
            x[self.i_ds] = self.load.v_link_v
        return x

    def initial_state(self):
        """All-off DC point: both inputs held high, every push-pull device off."""
        mode = (True, True)
        t_ref = 1e-9
        return newton_solve(lambda v: self.rhs(0.0, v, mode) * t_ref, self.dc_guess(),
                            tol=1e-12)


def _control_values(pwm, t):
    if t < 0:
        return pwm.logic_high_v, pwm.logic_high_v
    return eval_control(pwm, t)


def side_system(pwm, iso, totem, gan, side="lo"):
    """Single isolator + totem-pole + GaN gate sub-chain."""
    return ChainSystem(pwm, iso, iso, totem, totem, gan, load=None, sides=(side,))
