"""Driven SiC MOSFET and the resistive hard-switching test circuit.

The device has a square-law channel, a constant gate-source capacitance and
voltage-dependent Miller (gate-drain) and drain-source capacitances given as
tables. Tables are interpolated with a monotone piecewise cubic (PCHIP), so
the interpolant never leaves the range of its bracketing knots.
"""

import bisect
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IncompleteCycle, SingularCapacitance


def _pchip_edge(h0, h1, d0, d1):
    s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(s) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(s) > 3 * abs(d0):
        return 3 * d0
    return s


class CapTable:
    """Capacitance versus voltage, monotone cubic between knots, flat outside."""

    def __init__(self, volts, farads):
        v = [float(x) for x in volts]
        c = [float(x) for x in farads]
        if len(v) != len(c) or len(v) < 2:
            raise ValueError("capacitance table needs >= 2 matching knots")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("table voltages must be strictly increasing")
        if any(x <= 0 for x in c):
            raise ValueError("table capacitances must be strictly positive")
        if any(b > a for a, b in zip(c, c[1:])):
            raise ValueError("capacitance must be non-increasing in voltage")
        self.volts = tuple(v)
        self.farads = tuple(c)
        self._slopes = self._pchip_slopes(v, c)

    @staticmethod
    def _pchip_slopes(x, y):
        n = len(x)
        h = [x[k + 1] - x[k] for k in range(n - 1)]
        delta = [(y[k + 1] - y[k]) / h[k] for k in range(n - 1)]
        if n == 2:
            return [delta[0], delta[0]]
        d = [0.0] * n
        for k in range(1, n - 1):
            a, b = delta[k - 1], delta[k]
            if a == 0 or b == 0 or (a > 0) != (b > 0):
                d[k] = 0.0
            else:
                w1 = 2 * h[k] + h[k - 1]
                w2 = h[k] + 2 * h[k - 1]
                d[k] = (w1 + w2) / (w1 / a + w2 / b)
        d[0] = _pchip_edge(h[0], h[1], delta[0], delta[1])
        d[-1] = _pchip_edge(h[-1], h[-2], delta[-1], delta[-2])
        return d

    def __call__(self, v):
        xs = self.volts
        if v <= xs[0]:
            return self.farads[0]
        if v >= xs[-1]:
            return self.farads[-1]
        k = bisect.bisect_right(xs, v) - 1
        h = xs[k + 1] - xs[k]
        t = (v - xs[k]) / h
        t2 = t * t
        t3 = t2 * t
        y0, y1 = self.farads[k], self.farads[k + 1]
        d0, d1 = self._slopes[k], self._slopes[k + 1]
        return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
                + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)

    @classmethod
    def from_csv(cls, path):
        """Read a table from a CSV file with header ``v,cap_f``."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"v", "cap_f"}:
            raise ValueError(f"{path}: expected header 'v,cap_f'")
        return cls([r["v"] for r in rows], [r["cap_f"] for r in rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("v,cap_f\n")
            for v, c in zip(self.volts, self.farads):
                fh.write(f"{v:.12g},{c:.12g}\n")


# Datasheet-shaped placeholders for a 1200 V / 10 A class device; not measured data.
DEFAULT_CGD = CapTable(
    [0, 1, 2, 3, 5, 7.5, 10, 15, 20, 30, 40, 50],
    [60e-12, 42e-12, 32e-12, 25e-12, 17e-12, 12e-12, 9.5e-12, 7e-12, 5.8e-12, 4.8e-12,
     4.3e-12, 4e-12],
)
DEFAULT_CDS = CapTable(
    [0, 1, 2, 3, 5, 7.5, 10, 15, 20, 30, 40, 50],
    [220e-12, 150e-12, 115e-12, 95e-12, 72e-12, 58e-12, 50e-12, 40e-12, 34e-12, 27e-12,
     23e-12, 20e-12],
)


@dataclass(frozen=True)
class SicMosfetModel:
    vth_v: float = 2.8
    kp_a_per_v2: float = 0.15
    cgs_f: float = 420e-12
    cgd_table: CapTable = field(default=DEFAULT_CGD)
    cds_table: CapTable = field(default=DEFAULT_CDS)
    rg_internal_ohm: float = 6.0

    def __post_init__(self):
        if not self.vth_v > 0:
            raise ValueError("vth_v must be positive")
        if not self.kp_a_per_v2 > 0 or not self.cgs_f > 0:
            raise ValueError("kp_a_per_v2 and cgs_f must be positive")
        if self.rg_internal_ohm < 0:
            raise ValueError("rg_internal_ohm must be >= 0")


@dataclass(frozen=True)
class HardSwitchCircuit:
    v_link_v: float = 50.0
    r_limit_ohm: float = 100.0
    r_gate_ext_ohm: float = 0.0
    device: SicMosfetModel = field(default_factory=SicMosfetModel)
    driver_output: str = "v_out"

    def __post_init__(self):
        if not self.v_link_v > 0 or not self.r_limit_ohm > 0:
            raise ValueError("v_link_v and r_limit_ohm must be positive")
        if self.r_gate_ext_ohm < 0:
            raise ValueError("r_gate_ext_ohm must be >= 0")

    @property
    def r_gate_total(self):
        return self.device.rg_internal_ohm + self.r_gate_ext_ohm


@dataclass(frozen=True)
class OpenLoad:
    """Unloaded driver output: only pad and probe capacitance."""

    c_load_f: float = 100e-12  # probe plus pad

    def __post_init__(self):
        if not self.c_load_f > 0:
            raise ValueError("c_load_f must be positive")


def channel_current(model, v_gs, v_ds):
    """Level-1 drain current (A); reverse conduction uses the triode expression."""
    vov = v_gs - model.vth_v
    if vov <= 0:
        return 0.0
    kp = model.kp_a_per_v2
    if v_ds < vov:
        return kp * (vov * v_ds - 0.5 * v_ds * v_ds)
    return 0.5 * kp * vov * vov


def device_derivatives(circuit, v_g, v_d, i_gate):
    """Node slopes of the gate and drain given the current into the gate.

    Solves the 2x2 capacitance system
    ``[[cgs+cgd, -cgd], [-cgd, cds+cgd]] @ [dvg, dvd] = [i_gate, i_r - i_ch]``.
    Returns ``(dvg, dvd, i_ch, i_r)``.
    """
    dev = circuit.device
    cgd = dev.cgd_table(v_d - v_g)
    cds = dev.cds_table(v_d)
    cgs = dev.cgs_f
    a11 = cgs + cgd
    a22 = cds + cgd
    det = a11 * a22 - cgd * cgd
    if not det > 0:
        raise SingularCapacitance(f"capacitance matrix determinant {det:g} at v_g={v_g}, v_d={v_d}")
    i_ch = channel_current(dev, v_g, v_d)
    i_r = (circuit.v_link_v - v_d) / circuit.r_limit_ohm
    b1 = i_gate
    b2 = i_r - i_ch
    dvg = (a22 * b1 + cgd * b2) / det
    dvd = (cgd * b1 + a11 * b2) / det
    return dvg, dvd, i_ch, i_r


def circuit_rhs(circuit, state, drive):
    """Derivatives of ``(v_gate, v_drain)`` with the driver pin held at ``drive`` volts."""
    v_g, v_d = state[0], state[1]
    r_g = circuit.r_gate_total
    if r_g <= 0:
        raise SingularCapacitance("zero total gate resistance needs an inductive driver model")
    dvg, dvd, _, _ = device_derivatives(circuit, v_g, v_d, (drive - v_g) / r_g)
    return np.array([dvg, dvd])


def _crossing(t, y, level, rising, start=0):
    for k in range(start, len(y) - 1):
        a, b = y[k], y[k + 1]
        if (rising and a < level <= b) or (not rising and a > level >= b):
            return k, t[k] + (level - a) / (b - a) * (t[k + 1] - t[k])
    return None, None


def transition_time(t, y, lo, hi, rising, start=0):
    """First complete 10-90 % transition at or after sample ``start``.

    Returns ``(duration, end_index)`` or ``(None, None)`` if none is found.
    ``lo``/``hi`` are the 10 % and 90 % levels.
    """
    first, last = (lo, hi) if rising else (hi, lo)
    k = start
    while True:
        k, t_a = _crossing(t, y, first, rising, k)
        if k is None:
            return None, None
        k2, t_b = _crossing(t, y, last, rising, k)
        if k2 is None:
            return None, None
        # the waveform must not fall back through the first level in between
        back, _ = _crossing(t[: k2 + 2], y[: k2 + 2], first, not rising, k + 1)
        if back is None or back >= k2:
            return t_b - t_a, k2
        k = back + 1


def switching_times(trace, node="v_ds"):
    """10-90 % turn-on (falling v_ds) and turn-off (rising v_ds) durations.

    Levels are taken from the span of ``node`` over the trace. Needs one
    complete falling and one complete rising transition.
    """
    t = np.asarray(trace.times)
    y = np.asarray(trace.node_voltages[node])
    lo_v, hi_v = float(np.min(y)), float(np.max(y))
    span = hi_v - lo_v
    if span <= 0:
        raise IncompleteCycle(f"{node} never switches")
    lo, hi = lo_v + 0.1 * span, lo_v + 0.9 * span
    t_on, _ = transition_time(t, y, lo, hi, rising=False)
    t_off, _ = transition_time(t, y, lo, hi, rising=True)
    if t_on is None or t_off is None:
        raise IncompleteCycle(f"{node}: trace lacks a complete on->off->on cycle")
    return t_on, t_off


def load_device_tables(cgd_path=None, cds_path=None, base_dir=None):
    base = Path(base_dir) if base_dir else Path.cwd()
    cgd = CapTable.from_csv(base / cgd_path) if cgd_path else DEFAULT_CGD
    cds = CapTable.from_csv(base / cds_path) if cds_path else DEFAULT_CDS
    return cgd, cds
