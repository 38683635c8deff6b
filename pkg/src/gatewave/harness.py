"""Presets, sweeps and artifact emission.

A preset is a scenario file plus ``preset.*`` keys describing the experiment
and ``bounds.*`` keys declaring its pass/fail checks::

    preset.kind = "sweep"               # "single", "sweep" or "compare"
    preset.param = "pwm.frequency_hz"   # sweep axis (any numeric config key)
    preset.values = [1e6, 5e6]
    preset.series_param = "rails.v_dsil"   # optional second axis, one curve each
    preset.series_values = [3.0, 4.5]
    preset.extra_points = [[3.8, 2e7]]  # optional (series, value) pairs
    preset.variants = ["prototype_a", "prototype_b"]   # compare: scenarios to overlay
    preset.nodes = ["v_ggan_lo"]        # waveform rows
    preset.stage = "dsil"               # power row ("rail_dsil")
    preset.plot_metric = "v_max"        # sweep plot: y column
    preset.plot_name = "v_ggan_lo"      # sweep plot: row name
    preset.plot_hline = 0.2             # optional horizontal rule
    preset.plot_hline_label = "thermal limit"

    bounds.<id>.kind = "range" | "equals" | "monotone" | "greater"
    bounds.<id>.metric / .name          # stats column and row name
    bounds.<id>.at / .series / .variant # row selection (``at`` may be a list)
    bounds.<id>.min / .max              # range
    bounds.<id>.value                   # equals
    bounds.<id>.axis / .direction / .from   # monotone ("param" | "series")
    bounds.<id>.other_metric / .other_name / .other_variant   # greater

Output layout under ``<out>/<preset>/``: ``trace_<point>.csv`` per simulated
point, ``stats.csv``, ``plot_<name>.svg`` and ``summary.txt``. Every file is
written to a temporary name and renamed into place.
"""

import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .config import (PRESET_DIR, build_scenario, check_param_path, overlay, parse_text,
                     read_flat, resolve_preset_path)
from .errors import (EmptyData, GatewaveError, IncompleteCycle, UnknownPreset,
                     ValidationError)
from .solver import run_to_pss

WORKERS_ENV = "GATEWAVE_WORKERS"
STAGES = ("dsih", "dsil", "dgan", "link")


# --- running one scenario ----------------------------------------------------
def run_scenario(scenario):
    """Periodic steady state of ``scenario``: ``(trace, n_periods)``."""
    return run_to_pss(scenario.system(), scenario.pwm.period, scenario.solver)


def node_rail(scenario, node):
    """Commanded rail (V) that ``node`` is measured against for overshoot."""
    if node.startswith(("v_gsi_", "v_tp_", "v_ggan_")):
        return getattr(scenario, f"isolator_{node.rsplit('_', 1)[1]}").rail_v
    if node in ("v_sw", "v_out", "v_gs"):
        return scenario.pushpull.rail_v
    if node == "v_ds":
        return scenario.load.v_link_v
    if node.startswith("v_in_"):
        return scenario.pwm.logic_high_v
    raise KeyError(node)


@dataclass
class PointResult:
    """Measurements of one simulated scenario (a sweep row)."""

    label: str
    value: object = None
    series: object = None
    variant: str = ""
    waves: dict = field(default_factory=dict)
    power: object = None
    n_periods: int = None
    energy_rel_err: float = None
    status: str = "ok"
    error: str = ""
    trace: object = None


def measure(scenario, nodes=None, stage=None, keep_trace=False, **meta):
    """Simulate ``scenario`` and collect waveform and power statistics.

    Solver and cycle errors are caught and recorded in the result so that a
    failing point never aborts a sweep.
    """
    res = PointResult(label=scenario.label, **meta)
    try:
        trace, n = run_scenario(scenario)
    except GatewaveError as exc:
        res.status = "error"
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.n_periods = n
    if keep_trace:
        res.trace = trace
    if nodes is None:
        nodes = [k for k in trace.node_voltages if not k.startswith("v_in_")]
    for node in nodes:
        try:
            res.waves[node] = metrics.waveform_stats(trace, node, node_rail(scenario, node))
        except IncompleteCycle as exc:
            res.waves[node] = exc
    if stage is not None:
        res.power = metrics.power_stats(trace, stage, scenario.thermal)
    supplied, dissipated = metrics.energy_balance(trace)["total"]
    res.energy_rel_err = abs(supplied - dissipated) / max(abs(supplied), 1e-30)
    return res


def _measure_task(args):
    scenario, nodes, stage, keep, meta = args
    return measure(scenario, nodes, stage, keep, **meta)


def worker_count(workers=None):
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError as exc:
                raise ValidationError(WORKERS_ENV, "must be an integer") from exc
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise ValidationError("workers", "must be >= 1")
    return workers


def run_points(tasks, workers=None):
    """Run ``measure`` over task tuples; results come back in input order."""
    tasks = list(tasks)
    n = min(worker_count(workers), len(tasks))
    if n <= 1:
        return [_measure_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_measure_task, tasks))


# --- sweeps --------------------------------------------------------------------
@dataclass
class SweepResult:
    param: str
    values: list
    rows: list

    def column(self, metric, name):
        """One stats column across rows (None where a row failed)."""
        return [_row_metric(r, metric, name) for r in self.rows]


def sweep(scenario, param_path, values, nodes=None, stage=None, workers=None,
          keep_traces=False):
    """Independent periodic-steady-state runs with ``param_path`` set to each value."""
    check_param_path(param_path)
    values = list(values)
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(param_path, f"sweep value {v!r} is not a finite number")
    tasks = []
    for v in values:
        tasks.append((scenario.with_value(param_path, v), nodes, stage, keep_traces,
                      {"value": v}))
    return SweepResult(param=param_path, values=values, rows=run_points(tasks, workers))


def _row_metric(row, metric, name):
    if row.status != "ok":
        return None
    if metric in ("n_periods", "energy_rel_err"):
        return getattr(row, metric)
    if name.startswith("rail_"):
        p = row.power
        if p is None or p.stage != name[len("rail_"):]:
            return None
        return {"avg_rail_current_a": p.rail_current_a,
                "penetration_charge_c": p.penetration_charge_c,
                "dissipation_w": p.stage_dissipation_w,
                "junction_temp_c": p.junction_temp_c,
                "runaway": p.runaway}.get(metric)
    w = row.waves.get(name)
    if w is None or isinstance(w, Exception):
        return None
    return getattr(w, metric, None)


# --- presets -------------------------------------------------------------------
@dataclass
class Bound:
    name: str
    kind: str
    metric: str
    row_name: str
    select: dict = field(default_factory=dict)
    lo: float = None
    hi: float = None
    value: object = None
    axis: str = "param"
    direction: str = "nondecreasing"
    start: float = None
    other_metric: str = None
    other_name: str = None
    other_select: dict = field(default_factory=dict)


@dataclass
class Preset:
    name: str
    path: Path
    kind: str
    scenario: object
    description: str = ""
    param: str = None
    values: list = field(default_factory=list)
    series_param: str = None
    series_values: list = field(default_factory=list)
    extra_points: list = field(default_factory=list)
    variants: list = field(default_factory=list)
    nodes: list = None
    stage: str = None
    plot_metric: str = None
    plot_name: str = None
    plot_hline: float = None
    plot_hline_label: str = ""
    bounds: list = field(default_factory=list)


_PRESET_KEYS = {"description", "kind", "param", "values", "series_param", "series_values",
                "extra_points", "variants", "nodes", "stage", "plot_metric", "plot_name",
                "plot_hline", "plot_hline_label"}
_BOUND_KEYS = {"kind", "metric", "name", "at", "series", "variant", "min", "max", "value",
               "axis", "direction", "from", "other_metric", "other_name", "other_variant"}


def list_presets():
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))


def _parse_bounds(keys):
    groups = {}
    for key, v in keys.items():
        parts = key.split(".")
        if len(parts) != 3 or parts[2] not in _BOUND_KEYS:
            raise ValidationError(key, "unknown bound key")
        groups.setdefault(parts[1], {})[parts[2]] = v
    bounds = []
    for bid, g in groups.items():
        kind = g.get("kind")
        if kind not in ("range", "equals", "monotone", "greater"):
            raise ValidationError(f"bounds.{bid}.kind", "must be range/equals/monotone/greater")
        if "metric" not in g or "name" not in g:
            raise ValidationError(f"bounds.{bid}", "needs metric and name")
        sel = {k: g[k] for k in ("at", "series", "variant") if k in g}
        b = Bound(name=bid, kind=kind, metric=g["metric"], row_name=g["name"], select=sel,
                  lo=g.get("min"), hi=g.get("max"), value=g.get("value"),
                  axis=g.get("axis", "param"), direction=g.get("direction", "nondecreasing"),
                  start=g.get("from"), other_metric=g.get("other_metric", g["metric"]),
                  other_name=g.get("other_name", g["name"]),
                  other_select={"variant": g["other_variant"]} if "other_variant" in g else {})
        if kind == "range" and b.lo is None and b.hi is None:
            raise ValidationError(f"bounds.{bid}", "range needs min and/or max")
        if kind == "equals" and "value" not in g:
            raise ValidationError(f"bounds.{bid}.value", "required for equals")
        if kind == "monotone" and (b.axis not in ("param", "series") or b.direction not in (
                "nondecreasing", "nonincreasing")):
            raise ValidationError(f"bounds.{bid}", "bad axis or direction")
        bounds.append(b)
    return bounds


def load_preset(name):
    """Resolve a shipped preset name or a scenario-file path into a :class:`Preset`."""
    path = resolve_preset_path(name) if "/" not in name else None
    if path is None:
        p = Path(name)
        if not p.is_file():
            raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
        path = p
    flat = read_flat(path)
    own = parse_text(path.read_text(), str(path))
    exp = {k: v for k, v in own.items() if k.startswith(("preset.", "bounds."))}
    cfg = {k: v for k, v in flat.items() if not k.startswith(("preset.", "bounds."))}
    pk = {}
    for key, v in exp.items():
        if key.startswith("preset."):
            sub = key[len("preset."):]
            if sub not in _PRESET_KEYS:
                raise ValidationError(key, "unknown preset key")
            pk[sub] = v
    bounds = _parse_bounds({k: v for k, v in exp.items() if k.startswith("bounds.")})
    kind = pk.get("kind", "single")
    if kind not in ("single", "sweep", "compare"):
        raise ValidationError("preset.kind", "must be single, sweep or compare")
    cfg.setdefault("label", path.stem)
    scenario = build_scenario(cfg, base_dir=path.parent)
    preset = Preset(name=path.stem, path=path, kind=kind, scenario=scenario,
                    description=pk.get("description", ""), bounds=bounds,
                    nodes=pk.get("nodes"), stage=pk.get("stage"),
                    plot_metric=pk.get("plot_metric"), plot_name=pk.get("plot_name"),
                    plot_hline=pk.get("plot_hline"),
                    plot_hline_label=pk.get("plot_hline_label", ""))
    if preset.stage is not None and preset.stage not in STAGES:
        raise ValidationError("preset.stage", f"must be one of {', '.join(STAGES)}")
    if kind == "sweep":
        if "param" not in pk or not pk.get("values"):
            raise ValidationError("preset.param", "sweep presets need param and values")
        check_param_path(pk["param"])
        preset.param, preset.values = pk["param"], list(pk["values"])
        if "series_param" in pk:
            check_param_path(pk["series_param"])
            preset.series_param = pk["series_param"]
            preset.series_values = list(pk.get("series_values", []))
        preset.extra_points = [tuple(p) for p in pk.get("extra_points", [])]
    if kind == "compare":
        names = pk.get("variants") or []
        if len(names) < 2:
            raise ValidationError("preset.variants", "compare presets need >= 2 variants")
        own_cfg = {k: v for k, v in own.items()
                   if not k.startswith(("preset.", "bounds.")) and k not in ("base", "label")}
        for vname in names:
            vpath = resolve_preset_path(vname) or (path.parent / vname)
            if not Path(vpath).is_file():
                raise ValidationError("preset.variants", f"no preset or file {vname!r}")
            vcfg = overlay({k: v for k, v in read_flat(vpath).items()
                            if not k.startswith(("preset.", "bounds."))}, own_cfg)
            vcfg["label"] = Path(vname).stem
            preset.variants.append((Path(vname).stem, build_scenario(vcfg, Path(vpath).parent)))
    return preset


def _fmt_value(v):
    return f"{v:g}".replace("+", "")


def _point_tasks(preset):
    nodes, stage = preset.nodes, preset.stage
    base = preset.scenario
    if preset.kind == "single":
        return [(base, nodes, stage, True, {})]
    if preset.kind == "compare":
        return [(sc, nodes, stage, True, {"variant": name}) for name, sc in preset.variants]
    series = preset.series_values or [None]
    points = [(s, v) for s in series for v in preset.values]
    points += [p for p in preset.extra_points if p not in points]
    tasks = []
    for s, v in points:
        sc = base if s is None else base.with_value(preset.series_param, s)
        tasks.append((sc.with_value(preset.param, v), nodes, stage, True,
                      {"value": v, "series": s}))
    return tasks


def _point_slug(preset, row):
    if preset.kind == "single":
        return preset.name
    if preset.kind == "compare":
        return row.variant
    short = preset.param.rsplit(".", 1)[-1]
    slug = f"{short}-{_fmt_value(row.value)}"
    if row.series is not None:
        slug = f"{preset.series_param.rsplit('.', 1)[-1]}-{_fmt_value(row.series)}_{slug}"
    return slug


def _scenario_label(preset, row):
    if preset.kind == "compare":
        return f"{preset.name}[{row.variant}]"
    if row.series is not None:
        return f"{preset.name}[{preset.series_param}={_fmt_value(row.series)}]"
    return preset.name


def stats_rows(preset, results):
    out = []
    for r in results:
        scen = _scenario_label(preset, r)
        param = preset.param if preset.kind == "sweep" else ""
        value = r.value if preset.kind == "sweep" else ""
        if r.status != "ok":
            out.append(metrics.stats_row(scen, "", param, value, status=r.error))
            continue
        for node, w in r.waves.items():
            if isinstance(w, Exception):
                out.append(metrics.stats_row(scen, node, param, value, n_periods=r.n_periods,
                                             status=f"IncompleteCycle: {w}"))
            else:
                out.append(metrics.stats_row(scen, node, param, value, wave=w,
                                             n_periods=r.n_periods))
        if r.power is not None:
            out.append(metrics.stats_row(scen, f"rail_{r.power.stage}", param, value,
                                         power=r.power, n_periods=r.n_periods))
    return out


# --- bounds --------------------------------------------------------------------
def _matches(row, select):
    for key, want in select.items():
        have = {"at": row.value, "series": row.series, "variant": row.variant}[key]
        wants = want if isinstance(want, list) else [want]
        if not any(_same(have, w) for w in wants):
            return False
    return True


def _same(a, b):
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return math.isclose(a, b, rel_tol=1e-9)
    return a == b


def check_bound(bound, results):
    """``(passed, detail)`` for one bound over the preset's results."""
    rows = [r for r in results if _matches(r, bound.select)]
    if not rows:
        return False, "no matching rows"
    vals = [(r, _row_metric(r, bound.metric, bound.row_name)) for r in rows]
    missing = [r for r, v in vals if v is None]
    if missing:
        return False, f"{len(missing)} row(s) without {bound.metric} of {bound.row_name}"
    if bound.kind == "range":
        bad = [(r, v) for r, v in vals
               if (bound.lo is not None and not v >= bound.lo)
               or (bound.hi is not None and not v <= bound.hi)]
        shown = ", ".join(f"{v:.6g}" for _, v in vals)
        return not bad, f"{bound.metric}({bound.row_name}) = [{shown}] in [{bound.lo}, {bound.hi}]"
    if bound.kind == "equals":
        bad = [v for _, v in vals if v != bound.value]
        return not bad, f"{bound.metric}({bound.row_name}) = {[v for _, v in vals]} == {bound.value}"
    if bound.kind == "monotone":
        return _check_monotone(bound, vals)
    others = [r for r in results if _matches(r, bound.other_select)]
    if len(rows) != 1 or len(others) != 1:
        return False, "greater needs exactly one row per side"
    a = vals[0][1]
    b = _row_metric(others[0], bound.other_metric, bound.other_name)
    if b is None:
        return False, f"missing {bound.other_metric} of {bound.other_name}"
    return a > b, (f"{bound.metric}({bound.row_name}) = {a:.6g} > "
                   f"{bound.other_metric}({bound.other_name}) = {b:.6g}")


def _check_monotone(bound, vals):
    groups = {}
    for r, v in vals:
        if bound.axis == "param":
            key, x = r.series, r.value
        else:
            key, x = r.value, r.series
        if bound.start is not None and bound.axis == "param" and r.value < bound.start:
            continue
        groups.setdefault(key, []).append((x, v))
    failures = []
    for key, pts in groups.items():
        pts.sort(key=lambda p: p[0])
        ys = [p[1] for p in pts]
        for a, b in zip(ys, ys[1:]):
            ok = b >= a if bound.direction == "nondecreasing" else b <= a
            if not ok:
                failures.append(f"{key}: {a:.6g} -> {b:.6g}")
    detail = f"{bound.metric}({bound.row_name}) {bound.direction} along {bound.axis}"
    if failures:
        detail += "; violations " + "; ".join(failures)
    return not failures, detail


# --- output files --------------------------------------------------------------
def _atomic(path, writer):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class PlotSpec:
    title: str
    x_label: str
    y_label: str
    x_scale: float = 1.0
    y_scale: float = 1.0
    hline: float = None
    hline_label: str = ""
    log_x: bool = False


def emit_plot(data, spec, path):
    """Render ``{curve label: (x, y)}`` (or a Trace) as a self-contained SVG.

    Output is byte-stable: fixed SVG id salt and no timestamp.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if hasattr(data, "node_voltages"):
        data = {k: (data.times, v) for k, v in data.node_voltages.items()}
    series = {k: (np.asarray(x, dtype=float), np.asarray(y, dtype=float))
              for k, (x, y) in data.items() if len(x)}
    if not series:
        raise EmptyData("nothing to plot")
    with matplotlib.rc_context({"svg.hashsalt": "gatewave", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for label, (x, y) in series.items():
            ax.plot(x * spec.x_scale, y * spec.y_scale, marker="o" if len(x) < 50 else None,
                    markersize=4, label=str(label))
        if spec.hline is not None:
            ax.axhline(spec.hline * spec.y_scale, color="k", linestyle="--", linewidth=1,
                       label=spec.hline_label or None)
        if spec.log_x:
            ax.set_xscale("log")
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(spec.y_label)
        ax.set_title(spec.title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        _atomic(path, lambda p: fig.savefig(p, format="svg", metadata={"Date": None}))
        plt.close(fig)
    return Path(path)


_UNITS = {"v_max": ("V", 1.0), "v_min": ("V", 1.0), "avg": ("V", 1.0),
          "overshoot_v": ("V", 1.0), "rise_10_90_s": ("ns", 1e9), "fall_10_90_s": ("ns", 1e9),
          "measured_duty": ("-", 1.0), "avg_rail_current_a": ("A", 1.0),
          "penetration_charge_c": ("nC", 1e9), "dissipation_w": ("W", 1.0),
          "junction_temp_c": ("degC", 1.0)}


def _sweep_plot(preset, results, out):
    metric = preset.plot_metric
    name = preset.plot_name
    unit, scale = _UNITS.get(metric, ("", 1.0))
    curves = {}
    for r in results:
        v = _row_metric(r, metric, name)
        if v is None:
            continue
        key = preset.name if r.series is None else f"{preset.series_param.rsplit('.', 1)[-1]} = {_fmt_value(r.series)}"
        curves.setdefault(key, []).append((r.value, v))
    data = {}
    for k, pts in curves.items():
        pts.sort()
        data[k] = ([p[0] for p in pts], [p[1] for p in pts])
    x_unit, x_scale = ("MHz", 1e-6) if preset.param.endswith("frequency_hz") else ("", 1.0)
    spec = PlotSpec(title=f"{preset.name}: {metric} of {name}",
                    x_label=f"{preset.param} ({x_unit})" if x_unit else preset.param,
                    y_label=f"{metric} ({unit})", x_scale=x_scale, y_scale=scale,
                    hline=preset.plot_hline, hline_label=preset.plot_hline_label)
    return [emit_plot(data, spec, out / f"plot_{metric}.svg")]


def _trace_plots(preset, results, out):
    paths = []
    ok = [r for r in results if r.status == "ok" and r.trace is not None]
    if not ok:
        return paths
    nodes = preset.nodes or [k for k in ok[0].trace.node_voltages if not k.startswith("v_in_")]
    for node in nodes:
        data = {}
        for r in ok:
            tr = r.trace
            label = r.variant or preset.name
            data[label] = (tr.times - tr.times[0], tr.node_voltages[node])
        spec = PlotSpec(title=f"{preset.name}: {node}", x_label="time in final period (ns)",
                        y_label=f"{node} (V)", x_scale=1e9)
        paths.append(emit_plot(data, spec, out / f"plot_{node}.svg"))
    return paths


@dataclass
class RunReport:
    preset: str
    out_dir: Path
    checks: list
    results: list
    exit_code: int

    @property
    def passed(self):
        return self.exit_code == 0


def run_preset(name, out_dir="gatewave_out", workers=None):
    """Run a preset, write its artifacts and return a :class:`RunReport`.

    Exit codes: 0 all bounds pass, 1 a bound fails, 3 a simulation failed.
    Unknown presets raise before anything is written.
    """
    preset = load_preset(name)
    results = run_points(_point_tasks(preset), workers)
    out = Path(out_dir) / preset.name
    out.mkdir(parents=True, exist_ok=True)

    for r in results:
        if r.trace is not None:
            _atomic(out / f"trace_{_point_slug(preset, r)}.csv", r.trace.to_csv)
    rows = stats_rows(preset, results)
    _atomic(out / "stats.csv", lambda p: metrics.write_stats_csv(p, rows))
    if preset.kind == "sweep" and preset.plot_metric:
        _sweep_plot(preset, results, out)
    else:
        _trace_plots(preset, results, out)

    checks = [(b.name, *check_bound(b, results)) for b in preset.bounds]
    failed_sim = [r for r in results if r.status != "ok"]
    if failed_sim:
        code = 3
    elif all(ok for _, ok, _ in checks):
        code = 0
    else:
        code = 1
    lines = [f"preset: {preset.name}"]
    if preset.description:
        lines.append(f"description: {preset.description}")
    for r in failed_sim:
        lines.append(f"ERROR {_scenario_label(preset, r)} {_point_slug(preset, r)}: {r.error}")
    for bname, ok, detail in checks:
        lines.append(f"{'PASS' if ok else 'FAIL'} {bname}: {detail}")
    lines.append(f"overall: {'PASS' if code == 0 else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    _atomic(out / "summary.txt", lambda p: Path(p).write_text(text))
    for r in results:
        r.trace = None
    return RunReport(preset=preset.name, out_dir=out, checks=checks, results=results,
                     exit_code=code)
