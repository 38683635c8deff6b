"""Implicit trapezoidal integration with step-doubling error control.

A *system* handed to :func:`integrate` provides:

``n`` / ``state_names``
    state dimension and names;
``state_scale``
    per-state magnitude used by the periodic-steady-state norm;
``breakpoints(t0, t1)``
    ``(time, label)`` pairs strictly inside ``(t0, t1)`` where the right-hand
    side is discontinuous or a control edge starts; steps never straddle them;
``mode_at(t)``
    discrete input state valid on the open step interval containing ``t``;
``rhs(t, x, mode)``
    state derivative as a numpy array;
``outputs(t, x, mode)``
    ``(node_voltages, branch_currents, powers)`` dicts of floats;
``initial_state()``
    default starting state;
``rails``
    dict of supply-group name to volts, copied onto the trace.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NewtonDivergence, NoSteadyState, StepUnderflow

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverOptions:
    rel_tol: float = 1e-6
    abs_tol_v: float = 1e-4
    dt_min_s: float = 1e-16
    dt_max_s: float = 2e-9
    newton_max_iter: int = 20
    newton_tol: float = 1e-10
    pss_period_tol: float = 1e-4
    pss_max_periods: int = 200
    adaptive: bool = True
    dt_restart_s: float = 1e-11  # first step after a discontinuity

    def __post_init__(self):
        if not 0 < self.dt_min_s <= self.dt_max_s:
            raise ValueError("need 0 < dt_min_s <= dt_max_s")
        for name in ("rel_tol", "abs_tol_v", "newton_tol", "pss_period_tol", "dt_restart_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_max_iter < 1 or self.pss_max_periods < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class Trace:
    """Sampled result of one simulation."""

    times: np.ndarray
    node_voltages: dict
    branch_currents: dict
    events: list = field(default_factory=list)
    powers: dict = field(default_factory=dict)
    rails: dict = field(default_factory=dict)
    states: np.ndarray = None
    state_names: tuple = ()
    period: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("trace needs at least two samples")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        m = len(self.times)
        for group in (self.node_voltages, self.branch_currents, self.powers):
            for name, arr in list(group.items()):
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (m,):
                    raise ValueError(f"series {name!r} length {arr.shape} != {m}")
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"series {name!r} has non-finite values")
                group[name] = arr

    def series(self, name):
        for group in (self.node_voltages, self.branch_currents, self.powers):
            if name in group:
                return group[name]
        raise KeyError(name)

    @property
    def span(self):
        return self.times[-1] - self.times[0]

    @property
    def final_state(self):
        return self.states[-1].copy()

    def integral(self, name):
        return float(np.trapezoid(self.series(name), self.times))

    def mean(self, name):
        return self.integral(name) / self.span

    def shifted(self, dt):
        return replace(self, times=self.times + dt,
                       events=[(t + dt, lab) for t, lab in self.events])

    def tiled(self, n):
        """Periodic extension over ``n`` copies of a one-period trace."""
        if self.period is None:
            raise ValueError("tiling needs a periodic trace")
        if n < 1:
            raise ValueError("n must be >= 1")
        idx = [np.arange(len(self.times))] + [np.arange(1, len(self.times))] * (n - 1)
        times = np.concatenate([self.times[i] + k * self.period for k, i in enumerate(idx)])

        def tile(group):
            return {k: np.concatenate([v[i] for i in idx]) for k, v in group.items()}

        states = None if self.states is None else np.concatenate([self.states[i] for i in idx])
        events = [(t + k * self.period, lab) for k in range(n) for t, lab in self.events]
        return replace(self, times=times, node_voltages=tile(self.node_voltages),
                       branch_currents=tile(self.branch_currents), powers=tile(self.powers),
                       states=states, events=events)

    def columns(self):
        return [*self.node_voltages, *self.branch_currents, *self.powers]

    def to_csv(self, path, columns=None):
        """Write ``time_s`` plus one column per series, 12 significant digits."""
        cols = self.columns() if columns is None else list(columns)
        data = [self.series(c) for c in cols]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", *cols])
            for k, t in enumerate(self.times):
                w.writerow([f"{t:.12g}", *(f"{d[k]:.12g}" for d in data)])


def fd_jacobian(func, x, f0=None, scale=None):
    """Forward-difference Jacobian with per-variable scaled perturbation."""
    x = np.asarray(x, dtype=float)
    f0 = func(x) if f0 is None else f0
    n = len(x)
    J = np.empty((len(f0), n))
    sqeps = math.sqrt(_EPS)
    for j in range(n):
        ref = max(abs(x[j]), 1.0 if scale is None else scale[j])
        h = sqeps * ref
        xp = x.copy()
        xp[j] += h
        h = xp[j] - x[j]
        J[:, j] = (func(xp) - f0) / h
    return J


def newton_solve(residual, guess, jacobian=None, tol=1e-10, max_iter=20):
    """Solve ``residual(x) = 0`` by Newton's method.

    ``jacobian`` is a callable returning the Jacobian matrix; when omitted a
    forward-difference Jacobian is rebuilt every iteration. Convergence is
    declared when the residual max-norm is ``<= tol`` or the update is below
    ``tol * (1 + |x|)``.
    """
    scalar = np.ndim(guess) == 0
    x = np.atleast_1d(np.asarray(guess, dtype=float)).copy()

    def res(v):
        return np.atleast_1d(np.asarray(residual(v[0] if scalar else v), dtype=float))

    r = res(x)
    norm = float(np.max(np.abs(r)))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return x[0] if scalar else x
        if jacobian is None:
            J = fd_jacobian(res, x, r)
            # a column at finite-difference noise level means a flat direction
            step = math.sqrt(_EPS) * np.maximum(np.abs(x), 1.0)
            noise = 100 * _EPS * np.max(np.abs(r)) / step
            if np.any(np.max(np.abs(J), axis=0) <= noise):
                raise NewtonDivergence("singular Jacobian (zero derivative)", it, norm)
        else:
            J = np.atleast_2d(np.asarray(jacobian(x[0] if scalar else x), dtype=float))
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NewtonDivergence("singular Jacobian", it, norm) from None
        if not np.all(np.isfinite(dx)):
            raise NewtonDivergence("non-finite Newton update", it, norm)
        x = x + dx
        r = res(x)
        norm = float(np.max(np.abs(r)))
        if not np.isfinite(norm):
            raise NewtonDivergence("non-finite residual", it, norm)
        if np.max(np.abs(dx)) <= tol * (1.0 + np.max(np.abs(x))):
            return x[0] if scalar else x
    raise NewtonDivergence(f"no convergence after {max_iter} iterations (|r|={norm:.3g})",
                           max_iter, norm)


class _Stepper:
    """Trapezoidal steps with a cached (modified-Newton) Jacobian."""

    def __init__(self, system, opts):
        self.system = system
        self.opts = opts
        self.n = system.n
        self.eye = np.eye(self.n)
        self.jac = None
        self.scale = np.asarray(system.state_scale, dtype=float)

    def refresh(self, t, x, mode, f=None):
        sysrhs = self.system.rhs
        self.jac = fd_jacobian(lambda v: sysrhs(t, v, mode), x, f, self.scale)

    def step(self, t, x, f0, h, mode):
        """One trapezoidal step; returns ``(x1, f1)`` or raises NewtonDivergence."""
        opts = self.opts
        rhs = self.system.rhs
        t1 = t + h
        if self.jac is None:
            self.refresh(t, x, mode, f0)
        refreshed = False
        xn = x + h * f0
        A_inv = np.linalg.inv(self.eye - 0.5 * h * self.jac)
        base = x + 0.5 * h * f0
        prev = None
        for it in range(opts.newton_max_iter):
            f1 = rhs(t1, xn, mode)
            r = xn - base - 0.5 * h * f1
            dx = -A_inv @ r
            xn = xn + dx
            if not np.all(np.isfinite(xn)):
                break
            dnorm = float(np.max(np.abs(dx)))
            if dnorm <= opts.newton_tol * (1.0 + float(np.max(np.abs(xn)))):
                f1 = rhs(t1, xn, mode)
                if np.all(np.isfinite(f1)):
                    return xn, f1
                break
            if prev is not None and dnorm > 0.3 * prev:
                if refreshed and dnorm > prev:
                    break
                if not refreshed:
                    # slow contraction: rebuild the Jacobian at the current iterate
                    self.refresh(t1, xn, mode)
                    A_inv = np.linalg.inv(self.eye - 0.5 * h * self.jac)
                    refreshed = True
            prev = dnorm
        self.jac = None
        raise NewtonDivergence(f"trapezoidal step at t={t:.6g}, h={h:.3g} did not converge",
                               opts.newton_max_iter)


def _stops(system, t0, t1):
    bps = [(t, lab) for t, lab in system.breakpoints(t0, t1) if t0 < t < t1]
    bps.sort(key=lambda e: e[0])
    times = []
    for t, _ in bps:
        if not times or t > times[-1]:
            times.append(t)
    times.append(t1)
    return times, bps


def integrate(system, t0, t1, opts=None, x0=None):
    """Integrate ``system`` from ``t0`` to ``t1`` and return a :class:`Trace`."""
    if not t0 < t1:
        raise ValueError("t0 must be < t1")
    opts = opts or SolverOptions()
    x = np.array(system.initial_state() if x0 is None else x0, dtype=float)
    stops, bps = _stops(system, t0, t1)
    stepper = _Stepper(system, opts)
    ts, xs, modes = [t0], [x.copy()], []
    t = t0
    h = min(opts.dt_restart_s, opts.dt_max_s)
    prev_mode = None
    for stop in stops:
        mode = system.mode_at(0.5 * (t + stop))
        if not modes:
            modes.append(mode)
        f = system.rhs(t, x, mode)
        if mode != prev_mode:
            stepper.jac = None
            h = min(h, opts.dt_restart_s)
        prev_mode = mode
        if opts.adaptive:
            t, x, h = _adaptive_segment(stepper, t, x, f, h, stop, mode, ts, xs, modes)
        else:
            t, x = _fixed_segment(stepper, t, x, f, stop, mode, ts, xs, modes)
    return _build_trace(system, ts, xs, modes, bps)


def _fixed_segment(stepper, t, x, f, stop, mode, ts, xs, modes):
    dt = stepper.opts.dt_max_s
    n = max(1, math.ceil((stop - t) / dt - 1e-9))
    start = t
    for k in range(1, n + 1):
        t_next = stop if k == n else start + (stop - start) * k / n
        x, f = stepper.step(t, x, f, t_next - t, mode)
        t = t_next
        ts.append(t)
        xs.append(x.copy())
        modes.append(mode)
    return t, x


def _adaptive_segment(stepper, t, x, f, h, stop, mode, ts, xs, modes):
    opts = stepper.opts
    while t < stop:
        h = min(h, opts.dt_max_s)
        if t + 1.1 * h >= stop:
            h = stop - t
        retries = 0
        while True:
            try:
                x_full, _ = stepper.step(t, x, f, h, mode)
                x_mid, f_mid = stepper.step(t, x, f, 0.5 * h, mode)
                x_half, f_half = stepper.step(t + 0.5 * h, x_mid, f_mid, 0.5 * h, mode)
            except NewtonDivergence as exc:
                retries += 1
                if retries > 5 or 0.25 * h < opts.dt_min_s:
                    raise NewtonDivergence(f"{exc} (after {retries - 1} step reductions)",
                                           exc.iterations, exc.last_norm) from None
                h *= 0.25
                continue
            err = np.abs(x_half - x_full) / 3.0
            w = opts.abs_tol_v + opts.rel_tol * np.maximum(np.abs(x), np.abs(x_half))
            e = float(np.max(err / w))
            if e <= 1.0:
                break
            if h <= opts.dt_min_s:
                raise StepUnderflow(f"error {e:.3g}x tolerance at dt_min, t={t:.6g}")
            h = max(opts.dt_min_s, h * max(0.2, 0.9 * e ** (-1.0 / 3.0)))
        t_next = stop if t + h >= stop else t + h
        ts.append(t + 0.5 * h)
        xs.append(x_mid.copy())
        modes.append(mode)
        ts.append(t_next)
        xs.append(x_half.copy())
        modes.append(mode)
        t, x, f = t_next, x_half, f_half
        grow = 2.0 if e == 0 else min(2.0, max(0.2, 0.9 * e ** (-1.0 / 3.0)))
        h = h * grow
    return t, x, h


def _build_trace(system, ts, xs, modes, bps):
    nodes, branches, powers = {}, {}, {}
    for t, x, mode in zip(ts, xs, modes):
        nv, bc, pw = system.outputs(t, x, mode)
        for dst, src in ((nodes, nv), (branches, bc), (powers, pw)):
            for k, v in src.items():
                dst.setdefault(k, []).append(v)
    return Trace(
        times=np.array(ts),
        node_voltages=nodes,
        branch_currents=branches,
        powers=powers,
        events=list(bps),
        rails=dict(getattr(system, "rails", {})),
        states=np.array(xs),
        state_names=tuple(system.state_names),
    )


def pss_residual(system, x_start, x_end):
    scale = np.maximum(np.asarray(system.state_scale, dtype=float), np.abs(x_start))
    return float(np.max(np.abs(np.asarray(x_end) - x_start) / scale))


def run_to_pss(system, period, opts=None, x0=None, t0=0.0):
    """Integrate period by period until the boundary state repeats.

    Returns ``(trace_of_final_period, n_periods)``.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    opts = opts or SolverOptions()
    x = np.array(system.initial_state() if x0 is None else x0, dtype=float)
    res = math.inf
    for k in range(1, opts.pss_max_periods + 1):
        trace = integrate(system, t0 + (k - 1) * period, t0 + k * period, opts, x)
        x_end = trace.final_state
        res = pss_residual(system, x, x_end)
        if res <= opts.pss_period_tol:
            trace.period = period
            trace.meta.update(n_periods=k, pss_residual=res)
            return trace, k
        x = x_end
    raise NoSteadyState(f"no periodic steady state after {opts.pss_max_periods} periods "
                        f"(last residual {res:.3g})")
