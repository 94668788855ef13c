import numpy as np
import pytest

from modelcg.geometry import Box, Simplex
from modelcg.models import LinearModelOracle
from modelcg.regression import (
    generate_regression_data,
    make_constraint_set,
    make_objective,
    make_oracle,
)
from modelcg.solver import (
    InnerTolerance,
    LineSearchError,
    LineSearchParams,
    SolverConfig,
    armijo_search,
    mcgm_solve,
    rate_certificate,
    stationarity_measure,
    verify_trace_arrays,
)


# ---------------------------------------------------------------------------
# line search
# ---------------------------------------------------------------------------


def test_armijo_accepts_immediately_on_linear_decrease():
    delta = 3.0
    x, y = np.array([0.0]), np.array([1.0])
    fun = lambda z: 5.0 - delta * float(z[0])  # slope exactly -delta
    res = armijo_search(fun, x, y, delta, LineSearchParams(rho=0.9))
    assert res.backtracks == 0 and res.gamma == 1.0


def test_armijo_hand_computed_backtracking():
    # f(t) = t^2 from x=1 toward y=0 with improvement 2: first accepted step
    # is gamma = 0.125 after three rejections
    fun = lambda z: float(z[0]) ** 2
    params = LineSearchParams(rho=0.9, shrink=0.5, gamma_max=1.0)
    res = armijo_search(fun, np.array([1.0]), np.array([0.0]), 2.0, params)
    assert res.backtracks == 3
    assert res.gamma == pytest.approx(0.125, abs=0)
    assert res.f_new == pytest.approx(0.765625, abs=0)


def test_armijo_tiny_rho_accepts_any_descent():
    fun = lambda z: float(z[0]) ** 2
    res = armijo_search(fun, np.array([1.0]), np.array([0.0]), 2.0,
                        LineSearchParams(rho=1e-9))
    assert res.backtracks == 0


def test_armijo_exhaustion_raises_with_diagnostics():
    fun = lambda z: float(z[0]) ** 2
    # claiming a huge improvement makes the condition unsatisfiable
    with pytest.raises(LineSearchError) as err:
        armijo_search(fun, np.array([1.0]), np.array([0.0]), 1e9,
                      LineSearchParams(rho=0.9, max_backtracks=10))
    assert err.value.backtracks == 10
    assert err.value.delta == 1e9


def test_armijo_rejects_nonpositive_improvement():
    with pytest.raises(ValueError):
        armijo_search(lambda z: 0.0, np.zeros(1), np.ones(1), 0.0)


def test_line_search_params_validation():
    with pytest.raises(ValueError):
        LineSearchParams(rho=1.0)
    with pytest.raises(ValueError):
        LineSearchParams(shrink=0.0)
    with pytest.raises(ValueError):
        LineSearchParams(gamma_max=1.5)


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------


def quadratic_box_setup(seed=0, dim=3):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim))
    Q = A.T @ A + np.eye(dim)
    b = rng.standard_normal(dim)
    fun = lambda x: 0.5 * float(np.asarray(x) @ (Q @ np.asarray(x))) + float(b @ x)
    grad = lambda x: Q @ np.asarray(x, float) + b
    box = Box(-np.ones(dim), np.ones(dim))
    return fun, grad, Q, b, box


def projected_gradient_reference(Q, b, box, iters=30000):
    L = np.linalg.eigvalsh(Q)[-1]
    x = np.zeros(Q.shape[0])
    for _ in range(iters):
        x = box.project(x - (Q @ x + b) / L)
    return x


def test_mcgm_converges_on_box_quadratic():
    fun, grad, Q, b, box = quadratic_box_setup()
    oracle = LinearModelOracle(fun, grad)
    trace = mcgm_solve(
        oracle, fun, box, np.zeros(3),
        cfg=SolverConfig(max_iterations=4000, delta_tol=1e-7),
    )
    x_ref = projected_gradient_reference(Q, b, box)
    assert trace.status == "stationary"
    assert trace.records[-1].delta <= 1e-6
    assert fun(trace.final_x) <= fun(x_ref) + 1e-5


def test_mcgm_terminates_immediately_at_stationary_start():
    c = np.array([2.0, 1.0, 3.0])
    fun = lambda x: float(c @ x)
    oracle = LinearModelOracle(fun, lambda x: c)
    simplex = Simplex(3)
    x0 = simplex.lmo(c)
    trace = mcgm_solve(oracle, fun, simplex, x0, cfg=SolverConfig(delta_tol=1e-10))
    assert trace.status == "stationary"
    assert len(trace.records) == 1
    assert trace.records[0].k == 0
    assert trace.records[0].gamma == 0.0
    assert trace.records[0].delta <= 1e-10


def test_mcgm_projects_infeasible_start():
    fun, grad, Q, b, box = quadratic_box_setup(seed=1)
    oracle = LinearModelOracle(fun, grad)
    trace = mcgm_solve(oracle, fun, box, 10 * np.ones(3),
                       cfg=SolverConfig(max_iterations=50))
    assert box.contains(trace.final_x, 1e-9)


def test_mcgm_trace_invariants_on_regression_problem():
    ds = generate_regression_data(P=4, M=40, mu=2.0, a_max=4.0, b_max=2.5, seed=3)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    trace = mcgm_solve(
        make_oracle(ds), fun, box, box.midpoint(),
        cfg=SolverConfig(max_iterations=60, check_feasibility=True),
    )
    assert trace.status == "stationary"
    f, d, g = trace.arrays()
    assert verify_trace_arrays(f, d, g, trace.rho, final_f=trace.final_f) == []
    # improvements vanish and the objective is monotone
    assert d[-1] <= 1e-8 * (1 + abs(f[0]))
    assert np.all(np.diff(f) <= 1e-9)
    # telescoped decrease bound
    f_lower = trace.best_f()
    assert float((g * d).sum()) <= (f[0] - f_lower) / trace.rho + 1e-9
    # every positive step exceeded the tolerance
    tol = SolverConfig().resolve_tol(f[0])
    assert all(r.delta > tol for r in trace.records[:-1])
    assert trace.records[-1].delta <= tol


def test_mcgm_time_budget_status():
    ds = generate_regression_data(P=6, M=60, mu=2.0, seed=4)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    trace = mcgm_solve(
        make_oracle(ds), fun, box, box.midpoint(),
        cfg=SolverConfig(max_iterations=10000, time_budget_s=0.0),
    )
    assert trace.status in ("time_budget", "stationary")
    assert len(trace.records) >= 1


def test_mcgm_max_iterations_status():
    ds = generate_regression_data(P=4, M=30, mu=2.0, seed=5)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    trace = mcgm_solve(make_oracle(ds), fun, box, box.midpoint(),
                       cfg=SolverConfig(max_iterations=1))
    assert trace.status == "max_iterations"
    assert len(trace.records) == 1
    assert trace.final_f <= trace.records[-1].f_value


def test_mcgm_callback_and_candidate_hook():
    fun, grad, Q, b, box = quadratic_box_setup(seed=2)
    oracle = LinearModelOracle(fun, grad)
    seen = []
    # hook: damp the candidate halfway toward the current point; still a
    # positive-improvement direction, so the method must keep descending
    hook = lambda model, x, y: 0.5 * (x + y)
    trace = mcgm_solve(oracle, fun, box, np.zeros(3), callback=seen.append,
                       cfg=SolverConfig(max_iterations=40), candidate_hook=hook)
    assert len(seen) == len(trace.records)
    f, d, g = trace.arrays()
    assert verify_trace_arrays(f, d, g, trace.rho, final_f=trace.final_f) == []


def test_inner_tolerance_validation_and_budget_mode():
    with pytest.raises(ValueError):
        InnerTolerance(mode="nope")
    with pytest.raises(ValueError):
        InnerTolerance(eps0=-1.0)
    ds = generate_regression_data(P=3, M=24, mu=1.0, seed=6)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    cfg = SolverConfig(
        max_iterations=25,
        inner=InnerTolerance(mode="budget", budget0=40, budget_step=40),
    )
    trace = mcgm_solve(make_oracle(ds), fun, box, box.midpoint(), cfg=cfg)
    f, d, g = trace.arrays()
    assert verify_trace_arrays(f, d, g, trace.rho, final_f=trace.final_f) == []


# ---------------------------------------------------------------------------
# stationarity measure
# ---------------------------------------------------------------------------


def test_stationarity_zero_at_interior_minimizer():
    Q = np.diag([2.0, 3.0])
    fun = lambda x: 0.5 * float(np.asarray(x) @ (Q @ np.asarray(x)))
    oracle = LinearModelOracle(fun, lambda x: Q @ np.asarray(x, float))
    box = Box(-np.ones(2), np.ones(2))
    assert stationarity_measure(oracle, np.zeros(2), box, eps=1e-12) == pytest.approx(
        0.0, abs=1e-12
    )


def test_stationarity_on_simplex_vertices():
    simplex = Simplex(2)
    e1 = np.array([1.0, 0.0])

    fun_flat = lambda x: float(np.array([1.0, 1.0]) @ x)
    oracle_flat = LinearModelOracle(fun_flat, lambda x: np.array([1.0, 1.0]))
    assert stationarity_measure(oracle_flat, e1, simplex) == pytest.approx(0.0, abs=0)

    fun_tilt = lambda x: float(np.array([2.0, 1.0]) @ x)
    oracle_tilt = LinearModelOracle(fun_tilt, lambda x: np.array([2.0, 1.0]))
    assert stationarity_measure(oracle_tilt, e1, simplex) == pytest.approx(1.0, abs=0)


# ---------------------------------------------------------------------------
# rate certificate
# ---------------------------------------------------------------------------


def _toy_trace(f_values, deltas, gammas, rho=0.25):
    from modelcg.solver import IterationRecord, SolverTrace

    records = [
        IterationRecord(k, f, d, g, 0, 0, 1, 0.0)
        for k, (f, d, g) in enumerate(zip(f_values, deltas, gammas))
    ]
    return SolverTrace(records=records, status="max_iterations",
                       final_x=np.zeros(1), final_f=f_values[-1], rho=rho)


def test_rate_certificate_boundary_equality():
    # single full step: equality when the lower bound is the reached value
    rho = 0.5
    f0, f1 = 10.0, 6.0
    delta = (f0 - f1) / rho
    trace = _toy_trace([f0], [delta], [1.0], rho=rho)
    trace.final_f = f1
    cert = rate_certificate(trace, f_lower=f1)
    assert cert.passed
    assert cert.worst_ratio == pytest.approx(1.0, rel=1e-12)


def test_rate_certificate_passes_on_produced_traces():
    ds = generate_regression_data(P=4, M=40, mu=2.0, seed=7)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    trace = mcgm_solve(make_oracle(ds), fun, box, box.midpoint(),
                       cfg=SolverConfig(max_iterations=50))
    assert rate_certificate(trace).passed


def test_rate_certificate_rejects_inflated_improvements():
    ds = generate_regression_data(P=4, M=40, mu=2.0, seed=8)
    fun = make_objective(ds)
    box = make_constraint_set(ds)
    trace = mcgm_solve(make_oracle(ds), fun, box, box.midpoint(),
                       cfg=SolverConfig(max_iterations=50))
    for r in trace.records:
        r.delta *= 1e3
    assert not rate_certificate(trace).passed


def test_rate_certificate_trivial_on_immediately_stationary_trace():
    trace = _toy_trace([5.0], [0.0], [0.0])
    assert rate_certificate(trace).passed


def test_verify_trace_arrays_detects_violations():
    assert verify_trace_arrays([5.0, 6.0], [1.0, 0.1], [1.0, 0.5], 0.25) != []
    assert verify_trace_arrays([5.0, 4.0], [1.0, 0.1], [1.0, 1.5], 0.25) != []
    assert verify_trace_arrays([5.0, 4.0], [1.0, -0.5], [1.0, 0.0], 0.25) != []
    assert verify_trace_arrays([5.0, 4.0], [3.9, 0.1], [1.0, 0.0], 0.25) == []
