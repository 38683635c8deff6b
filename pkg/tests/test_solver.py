import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from gatewave.errors import NewtonDivergence, NoSteadyState
from gatewave.solver import (SolverOptions, Trace, integrate, newton_solve, pss_residual,
                             run_to_pss)

from oracles import SquareRC


class Cubic:
    """Smooth nonlinear scalar ODE x' = -x^3 + sin(t / 5 ns), no breakpoints."""

    n = 1
    state_names = ("x",)
    state_scale = np.array([1.0])
    rails = {}

    def breakpoints(self, t0, t1):
        return []

    def mode_at(self, t):
        return None

    def rhs(self, t, x, mode):
        return np.array([(-x[0] ** 3 + math.sin(t / 5e-9)) / 1e-9])

    def outputs(self, t, x, mode):
        return {"x": x[0]}, {}, {}

    def initial_state(self):
        return np.array([0.5])


# --- newton -----------------------------------------------------------------

def test_newton_scalar_root():
    assert newton_solve(lambda x: x * x - 4.0, 3.0) == pytest.approx(2.0, abs=1e-10)


def test_newton_vector_with_jacobian():
    f = lambda v: np.array([v[0] + v[1] - 3.0, v[0] - v[1] - 1.0])  # noqa: E731
    J = lambda v: np.array([[1.0, 1.0], [1.0, -1.0]])  # noqa: E731
    assert newton_solve(f, np.zeros(2), jacobian=J) == pytest.approx([2.0, 1.0])


def test_newton_singular_start_raises():
    with pytest.raises(NewtonDivergence):
        newton_solve(lambda x: x * x - 4.0, 0.0)


def test_newton_no_root_raises():
    with pytest.raises(NewtonDivergence):
        newton_solve(lambda x: x * x + 1.0, 0.3, max_iter=15)


# --- integration ------------------------------------------------------------

def test_rc_step_matches_exponential():
    rc = SquareRC(tau=10e-9, period=1e-6)
    opts = SolverOptions(rel_tol=1e-9, abs_tol_v=1e-10)
    tr = integrate(rc, 0.0, 100e-9, opts)
    exact = 3.0 * (1 - np.exp(-tr.times / 10e-9))
    assert np.max(np.abs(tr.node_voltages["v_c"] - exact)) <= 1e-6 * 3.0


def test_fixed_point_is_preserved():
    rc = SquareRC(period=1e-6)
    tr = integrate(rc, 0.0, 200e-9, x0=[3.0])
    assert np.all(tr.node_voltages["v_c"] == 3.0)


def test_fixed_step_second_order():
    sysm = Cubic()
    ref = solve_ivp(lambda t, x: sysm.rhs(t, x, None), (0.0, 20e-9), sysm.initial_state(),
                    method="DOP853", rtol=1e-13, atol=1e-14).y[:, -1]
    errs = [abs(integrate(sysm, 0.0, 20e-9, SolverOptions(adaptive=False, dt_max_s=h))
                .final_state[0] - ref[0]) for h in (0.2e-9, 0.1e-9, 0.05e-9)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 <= coarse / fine <= 4.5
    order = math.log2(errs[0] / errs[-1]) / 2
    assert 1.8 <= order <= 2.2


def test_steps_land_on_breakpoints():
    rc = SquareRC()
    tr = integrate(rc, 0.0, 200e-9)
    for t, _ in rc.breakpoints(0.0, 200e-9):
        assert np.min(np.abs(tr.times - t)) == 0.0
    assert [e[0] for e in tr.events] == [t for t, _ in rc.breakpoints(0.0, 200e-9)]


def test_integration_is_deterministic():
    rc = SquareRC()
    a = integrate(rc, 0.0, 300e-9)
    b = integrate(rc, 0.0, 300e-9)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.states, b.states)


# --- periodic steady state ----------------------------------------------------

def test_pss_restart_converges_in_one_period():
    rc = SquareRC()
    tr, n = run_to_pss(rc, rc.period)
    assert n > 1
    tr2, n2 = run_to_pss(rc, rc.period, x0=tr.states[0])
    assert n2 == 1
    assert pss_residual(rc, tr.states[0], tr2.final_state) <= 1e-4


def test_pss_count_matches_linear_estimate():
    # boundary error contracts by exp(-T / tau) per period
    rc = SquareRC(tau=10e-9, period=20e-9)
    opts = SolverOptions(pss_period_tol=1e-6, rel_tol=1e-9, abs_tol_v=1e-10)
    _, n = run_to_pss(rc, rc.period, opts)
    # first-period change is ~ v_ss_min / v scale; subsequent ones shrink geometrically
    q = math.exp(-rc.period / rc.tau)
    v_lo = rc.v * (1 - math.exp(-10e-9 / rc.tau)) * math.exp(-10e-9 / rc.tau) / (1 - q)
    d1 = v_lo / rc.v
    expected = 1 + math.ceil(math.log(1e-6 / d1) / math.log(q))
    assert abs(n - expected) <= 1


def test_pss_gives_up():
    rc = SquareRC(tau=1e-6, period=20e-9)
    with pytest.raises(NoSteadyState):
        run_to_pss(rc, rc.period, SolverOptions(pss_max_periods=3))


def test_pss_trace_carries_period():
    rc = SquareRC()
    tr, n = run_to_pss(rc, rc.period)
    assert tr.period == rc.period
    assert tr.meta["n_periods"] == n
    assert tr.span == pytest.approx(rc.period)


# --- trace container --------------------------------------------------------

def test_trace_validation():
    with pytest.raises(ValueError):
        Trace(times=[0.0], node_voltages={}, branch_currents={})
    with pytest.raises(ValueError):
        Trace(times=[0.0, 0.0], node_voltages={}, branch_currents={})
    with pytest.raises(ValueError):
        Trace(times=[0.0, 1.0], node_voltages={"v": [0.0, np.nan]}, branch_currents={})
    with pytest.raises(ValueError):
        Trace(times=[0.0, 1.0], node_voltages={"v": [0.0]}, branch_currents={})


def test_trace_tiling_and_csv(tmp_path):
    rc = SquareRC()
    tr, _ = run_to_pss(rc, rc.period)
    tiled = tr.tiled(3)
    assert tiled.span == pytest.approx(3 * rc.period)
    assert len(tiled.times) == 3 * len(tr.times) - 2
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time_s,v_c,i"
    assert len(lines) == len(tr.times) + 1


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(dt_min_s=1e-9, dt_max_s=1e-12)
    with pytest.raises(ValueError):
        SolverOptions(rel_tol=0.0)
