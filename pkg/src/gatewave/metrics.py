"""Waveform and power measurements on periodic-steady-state traces.

Every statistic is taken over the final period of a trace. Rise and fall
times use 10 % / 90 % of that period's own min-max span, not of the rail,
because high-frequency waveforms need not reach the rails.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, IncompleteCycle
from .load import transition_time

STATS_HEADER = (
    "scenario", "param", "value", "name", "v_max", "v_min", "avg", "overshoot_v",
    "rise_10_90_s", "fall_10_90_s", "measured_duty", "avg_rail_current_a",
    "penetration_charge_c", "dissipation_w", "junction_temp_c", "runaway", "n_periods",
    "status",
)


@dataclass(frozen=True)
class WaveformStats:
    v_max: float
    v_min: float
    avg: float
    overshoot_v: float
    rise_10_90_s: float
    fall_10_90_s: float
    measured_duty: float

    def __post_init__(self):
        if self.v_max < self.v_min:
            raise ValueError("v_max < v_min")
        if self.rise_10_90_s < 0 or self.fall_10_90_s < 0:
            raise ValueError("transition times must be >= 0")


@dataclass(frozen=True)
class PowerStats:
    """Per-period averages for one supply group plus its thermal verdict.

    ``avg_rail_current_a`` and ``dissipation_w`` hold every rail / group found
    in the trace; ``stage`` names the group the thermal verdict refers to.
    """

    stage: str
    avg_rail_current_a: dict = field(default_factory=dict)
    penetration_charge_c: float = 0.0
    dissipation_w: dict = field(default_factory=dict)
    junction_temp_c: float = 25.0
    runaway: bool = False

    def __post_init__(self):
        if self.penetration_charge_c < 0:
            raise ValueError("penetration charge must be >= 0")
        if any(i < 0 for i in self.avg_rail_current_a.values()):
            raise ValueError("average rail currents must be >= 0")

    @property
    def rail_current_a(self):
        return self.avg_rail_current_a[self.stage]

    @property
    def stage_dissipation_w(self):
        return self.dissipation_w[self.stage]


def _period_of(trace, period=None):
    p = period if period is not None else trace.period
    if p is None:
        p = trace.meta.get("period")
    if p is None:
        raise IncompleteCycle("trace carries no period; pass one explicitly")
    if trace.span < p * (1 - 1e-9):
        raise IncompleteCycle(f"trace spans {trace.span:g} s < one period {p:g} s")
    return float(p)


def final_period(trace, name, period=None):
    """``(times, values)`` of series ``name`` over the last period of ``trace``.

    The window start is interpolated when it falls between samples.
    """
    p = _period_of(trace, period)
    t = trace.times
    y = np.asarray(trace.series(name), dtype=float)
    t_start = t[-1] - p
    k = int(np.searchsorted(t, t_start, side="right"))
    if k == 0:
        return t.copy(), y.copy()
    y_start = np.interp(t_start, t[k - 1:k + 1], y[k - 1:k + 1])
    if t[k] - t_start <= 1e-15 * p:
        return t[k:].copy(), y[k:].copy()
    return np.concatenate([[t_start], t[k:]]), np.concatenate([[y_start], y[k:]])


def time_above(t, y, level):
    """Time during which the piecewise-linear ``y(t)`` exceeds ``level``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b = y[:-1] - level, y[1:] - level
    dt = np.diff(t)
    both = (a > 0) & (b > 0)
    total = float(np.sum(dt[both]))
    cross = (a > 0) != (b > 0)
    for k in np.nonzero(cross)[0]:
        frac = a[k] / (a[k] - b[k])
        total += float(dt[k] * (frac if a[k] > 0 else 1.0 - frac))
    return total


def waveform_stats(trace, node, rail_v, period=None):
    """Extremes, mean, overshoot, 10-90 % times and duty of ``node``."""
    p = _period_of(trace, period)
    t, y = final_period(trace, node, p)
    v_max, v_min = float(np.max(y)), float(np.min(y))
    span = v_max - v_min
    if not span > 1e-12 * max(1.0, abs(v_max)):
        raise IncompleteCycle(f"{node} is constant over the final period")
    avg = float(np.trapezoid(y, t) / (t[-1] - t[0]))
    # two copies so transitions straddling the period boundary are complete
    t2 = np.concatenate([t, t[1:] + p])
    y2 = np.concatenate([y, y[1:]])
    lo, hi = v_min + 0.1 * span, v_min + 0.9 * span
    rise, _ = transition_time(t2, y2, lo, hi, rising=True)
    fall, _ = transition_time(t2, y2, lo, hi, rising=False)
    if rise is None or fall is None:
        raise IncompleteCycle(f"{node} lacks a complete rising and falling edge")
    duty = time_above(t, y, 0.5 * (v_max + v_min)) / (t[-1] - t[0])
    return WaveformStats(
        v_max=v_max, v_min=v_min, avg=avg, overshoot_v=max(0.0, v_max - rail_v),
        rise_10_90_s=float(rise), fall_10_90_s=float(fall), measured_duty=float(duty),
    )


def _period_mean(trace, name, p):
    t, y = final_period(trace, name, p)
    return float(np.trapezoid(y, t) / (t[-1] - t[0]))


def power_stats(trace, stage, thermal, period=None):
    """Average rail currents, penetration charge and thermal verdict for ``stage``.

    ``stage`` is a supply-group name such as ``"dsil"``. The junction
    temperature is the thermal steady state at the group's average
    dissipation; starting from ambient it is also the maximum ever reached.
    """
    p = _period_of(trace, period)
    currents, diss = {}, {}
    for name in trace.branch_currents:
        if name.startswith("i_rail_"):
            currents[name[len("i_rail_"):]] = max(0.0, _period_mean(trace, name, p))
    for name in trace.powers:
        if name.startswith("p_"):
            diss[name[2:]] = _period_mean(trace, name, p)
    if stage not in currents or stage not in diss:
        raise KeyError(f"trace has no supply group {stage!r}")
    shoot = f"i_shoot_{stage}"
    if shoot in trace.branch_currents:
        t, y = final_period(trace, shoot, p)
        q = max(0.0, float(np.trapezoid(y, t)))
    else:
        q = 0.0
    t_j = thermal.ambient_c + thermal.r_th_k_per_w * diss[stage]
    return PowerStats(stage=stage, avg_rail_current_a=currents, penetration_charge_c=q,
                      dissipation_w=diss, junction_temp_c=t_j,
                      runaway=t_j >= thermal.runaway_threshold_c)


def energy_balance(trace, period=None):
    """``(supplied_w, dissipated_w)`` per supply group and for the total.

    At periodic steady state stored energy returns to its start value, so
    supplied and dissipated power agree per Si group and in total. The GaN
    and link groups exchange energy through the Miller capacitance and only
    balance jointly.
    """
    p = _period_of(trace, period)
    out = {}
    sup_total = 0.0
    for rail, v in trace.rails.items():
        name = f"i_rail_{rail}"
        if name not in trace.branch_currents:
            continue
        supplied = v * _period_mean(trace, name, p)
        sup_total += supplied
        dis = _period_mean(trace, f"p_{rail}", p) if f"p_{rail}" in trace.powers else math.nan
        out[rail] = (supplied, dis)
    out["total"] = (sup_total, _period_mean(trace, "p_total", p))
    return out


def compare_traces(a, b, nodes=None, scale=None):
    """Largest scaled deviation between two traces over their common span.

    Both traces are linearly interpolated onto the union of their sample
    times inside the overlap. ``scale`` is a number or a ``{node: volts}``
    mapping; by default the largest rail voltage of either trace is used.
    """
    t0 = max(a.times[0], b.times[0])
    t1 = min(a.times[-1], b.times[-1])
    if not t1 > t0:
        raise GridMismatch("trace spans do not overlap")
    if nodes is None:
        nodes = [n for n in a.node_voltages if n in b.node_voltages]
    if not nodes:
        raise GridMismatch("no common nodes")
    grid = np.union1d(a.times, b.times)
    grid = grid[(grid >= t0) & (grid <= t1)]
    rail_scale = max([*a.rails.values(), *b.rails.values()], default=None)
    worst = 0.0
    for n in nodes:
        ya = np.interp(grid, a.times, a.series(n))
        yb = np.interp(grid, b.times, b.series(n))
        if isinstance(scale, dict):
            s = scale[n]
        elif scale is not None:
            s = scale
        elif rail_scale:
            s = rail_scale
        else:
            s = max(np.max(np.abs(ya)), np.max(np.abs(yb)), 1e-30)
        worst = max(worst, float(np.max(np.abs(ya - yb))) / s)
    return worst


def stats_row(scenario, name, param="", value="", wave=None, power=None, n_periods="",
              status="ok"):
    """One stats-CSV row (a dict keyed by :data:`STATS_HEADER`)."""
    row = dict.fromkeys(STATS_HEADER, "")
    row.update(scenario=scenario, param=param, value=value, name=name,
               n_periods=n_periods, status=status)
    if wave is not None:
        for k in ("v_max", "v_min", "avg", "overshoot_v", "rise_10_90_s", "fall_10_90_s",
                  "measured_duty"):
            row[k] = getattr(wave, k)
    if power is not None:
        row.update(avg_rail_current_a=power.rail_current_a,
                   penetration_charge_c=power.penetration_charge_c,
                   dissipation_w=power.stage_dissipation_w,
                   junction_temp_c=power.junction_temp_c,
                   runaway=str(power.runaway).lower())
    return row


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_stats_csv(path, rows):
    """Write rows under the fixed :data:`STATS_HEADER` column order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for row in rows:
            w.writerow([_fmt(row.get(k, "")) for k in STATS_HEADER])
