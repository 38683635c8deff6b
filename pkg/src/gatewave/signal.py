"""Dual complementary PWM control signals for the high- and low-side isolators.

Each input is a trapezoidal pulse train. The Si totem-pole after each isolator
inverts, so a push-pull side conducts while its *input* is low. Timeline of one
period (T = 1/f), with ``dead = (duty_high + duty_low - 1) / 2 * T``::

    high input : rises at 0, falls at duty_high*T
    low input  : falls at dead + phase_offset*T, rises (1 - duty_low)*T later

With ``phase_offset = 0`` both push-pull transitions get the same dead time.
Every edge starts at its nominal time and ramps linearly over ``rise_fall_s``.
"""

import math
from dataclasses import dataclass

from .errors import OverlapError

HIGH = "high"
LOW = "low"
RISE = "rise"
FALL = "fall"


@dataclass(frozen=True)
class PwmSpec:
    frequency_hz: float = 20e6
    duty_high: float = 0.55
    duty_low: float = 0.55
    phase_offset: float = 0.0
    logic_high_v: float = 5.0
    logic_low_v: float = 0.0
    rise_fall_s: float = 1e-9

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("frequency_hz must be positive")
        for name in ("duty_high", "duty_low"):
            d = getattr(self, name)
            if not 0.0 < d < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0.0 <= self.phase_offset < 1.0:
            raise ValueError("phase_offset must lie in [0, 1)")
        if self.rise_fall_s < 0:
            raise ValueError("rise_fall_s must be >= 0")
        if self.logic_high_v <= self.logic_low_v:
            raise ValueError("logic_high_v must exceed logic_low_v")
        if self.duty_high + self.duty_low < 1.0:
            raise OverlapError(
                f"duty_high + duty_low = {self.duty_high + self.duty_low:g} < 1: "
                "push-pull conduction intervals would overlap"
            )
        T = self.period
        shortest = min(self.duty_high, 1 - self.duty_high, self.duty_low, 1 - self.duty_low) * T
        if self.rise_fall_s > shortest:
            raise ValueError("rise_fall_s longer than the shortest pulse segment")

    @property
    def period(self):
        return 1.0 / self.frequency_hz

    @property
    def logic_threshold_v(self):
        return 0.5 * (self.logic_high_v + self.logic_low_v)

    def edge_offsets(self):
        """Edge start offsets within one period: {(side, direction): seconds}."""
        T = self.period
        low_fall = (dead_time(self) + self.phase_offset * T) % T
        low_rise = (low_fall + (1.0 - self.duty_low) * T) % T
        return {
            (HIGH, RISE): 0.0,
            (HIGH, FALL): self.duty_high * T,
            (LOW, FALL): low_fall,
            (LOW, RISE): low_rise,
        }


def dead_time(spec):
    """Dead time inserted at each push-pull transition, in seconds."""
    margin = spec.duty_high + spec.duty_low - 1.0
    if margin < 0:
        raise OverlapError("duty_high + duty_low < 1")
    return 0.5 * margin * spec.period


def _pulse_shape(tau, width, rf, period):
    # tau: time since the rising edge start, already reduced to [0, period)
    if rf > 0 and tau < rf:
        return tau / rf
    if tau < width:
        return 1.0
    if rf > 0 and tau < width + rf:
        return 1.0 - (tau - width) / rf
    return 0.0


def _side_value(spec, t, side):
    T = spec.period
    offsets = spec.edge_offsets()
    if side == HIGH:
        start, width = offsets[(HIGH, RISE)], spec.duty_high * T
    else:
        start, width = offsets[(LOW, RISE)], spec.duty_low * T
    tau = math.fmod(t - start, T)
    if tau < 0:
        tau += T
    s = _pulse_shape(tau, width, spec.rise_fall_s, T)
    return spec.logic_low_v + (spec.logic_high_v - spec.logic_low_v) * s


def eval_control(spec, t):
    """Return ``(v_high, v_low)``, the two isolator input voltages at time ``t``."""
    return _side_value(spec, t, HIGH), _side_value(spec, t, LOW)


def _periodic_times(offset, period, t0, t1):
    k0 = math.floor((t0 - offset) / period) - 1
    k1 = math.ceil((t1 - offset) / period) + 1
    out = []
    for k in range(k0, k1 + 1):
        t = k * period + offset
        if t0 <= t < t1:
            out.append(t)
    return out


def edge_schedule(spec, t0, t1):
    """Edge start times of both inputs in ``[t0, t1)``.

    Returns a list of ``(time, side, direction)`` sorted by time. Times are
    strictly increasing per side; the two sides can coincide when the dead
    time is zero.
    """
    if not t0 < t1:
        raise ValueError("t0 must be < t1")
    events = []
    for (side, direction), off in spec.edge_offsets().items():
        for t in _periodic_times(off, spec.period, t0, t1):
            events.append((t, side, direction))
    events.sort(key=lambda e: (e[0], e[1] != HIGH))
    return events


def threshold_crossings(spec, t0, t1, threshold=None):
    """Times in ``[t0, t1)`` at which each input crosses ``threshold``.

    Returns ``(time, side, direction)`` like :func:`edge_schedule`. A crossing
    happens part-way along the linear ramp of its edge.
    """
    thr = spec.logic_threshold_v if threshold is None else threshold
    frac = (thr - spec.logic_low_v) / (spec.logic_high_v - spec.logic_low_v)
    frac = min(max(frac, 0.0), 1.0)
    rf = spec.rise_fall_s
    events = []
    for (side, direction), off in spec.edge_offsets().items():
        delay = rf * (frac if direction == RISE else 1.0 - frac)
        for t in _periodic_times(off + delay, spec.period, t0, t1):
            events.append((t, side, direction))
    events.sort(key=lambda e: (e[0], e[1] != HIGH))
    return events


def logic_state(spec, t, threshold=None):
    """Boolean logic level ``(high_in, low_in)`` of both inputs at time ``t``."""
    thr = spec.logic_threshold_v if threshold is None else threshold
    vh, vl = eval_control(spec, t)
    return vh > thr, vl > thr
