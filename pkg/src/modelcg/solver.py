"""Conditional-gradient outer loop over model functions, with a sufficient
decrease (Armijo) backtracking line search.

Each iteration instantiates the model at the current point, minimizes it
approximately over the constraint set (with a vanishing tolerance schedule),
and moves along the segment toward the minimizer by the largest backtracked
step that decreases the objective by at least ``rho * gamma * improvement``.
A non-positive best model improvement certifies approximate stationarity and
stops the loop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .geometry import require_finite

__all__ = [
    "LineSearchParams",
    "InnerTolerance",
    "SolverConfig",
    "IterationRecord",
    "SolverTrace",
    "ArmijoResult",
    "LineSearchError",
    "armijo_search",
    "mcgm_solve",
    "stationarity_measure",
    "rate_certificate",
    "RateCertificate",
    "verify_trace_arrays",
]


class LineSearchError(RuntimeError):
    """Backtracking exhausted its budget; carries diagnostics.

    This indicates an improvement value inconsistent with the model (or a
    broken error-growth premise), not a tolerance issue.
    """

    def __init__(self, backtracks, gamma, f_start, f_last, delta):
        super().__init__(
            f"line search exhausted {backtracks} backtracks "
            f"(last gamma={gamma:.3e}, f_start={f_start:.6e}, "
            f"f_last={f_last:.6e}, improvement={delta:.3e})"
        )
        self.backtracks = backtracks
        self.gamma = gamma
        self.f_start = f_start
        self.f_last = f_last
        self.delta = delta


@dataclass(frozen=True)
class LineSearchParams:
    """Sufficient-decrease parameters: accept gamma = gamma_max * shrink**j
    for the smallest j >= 0 with f(x + gamma d) <= f(x) - rho gamma delta."""

    rho: float = 0.25
    shrink: float = 0.5
    gamma_max: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0.0 < self.gamma_max <= 1.0:
            raise ValueError("gamma_max must lie in (0, 1]")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")


@dataclass
class ArmijoResult:
    gamma: float
    backtracks: int
    f_new: float


def armijo_search(fun, x, y, delta, params=None, f_x=None):
    """Backtracking line search along y - x against the model improvement.

    Returns the first step gamma = gamma_max * shrink**j satisfying the
    sufficient decrease condition. ``delta`` must be positive (a
    non-positive improvement means the step should not be attempted).
    Raises :class:`LineSearchError` when the backtrack budget is exhausted.
    """
    params = params or LineSearchParams()
    if not delta > 0:
        raise ValueError("line search needs a positive model improvement")
    x = np.asarray(x, dtype=float)
    d = np.asarray(y, dtype=float) - x
    if f_x is None:
        f_x = float(fun(x))
    f_new = math.inf
    gamma = params.gamma_max
    for j in range(params.max_backtracks + 1):
        gamma = params.gamma_max * params.shrink**j
        f_new = float(fun(x + gamma * d))
        if f_new <= f_x - params.rho * gamma * delta:
            return ArmijoResult(gamma=gamma, backtracks=j, f_new=f_new)
    raise LineSearchError(params.max_backtracks, gamma, f_x, f_new, delta)


@dataclass(frozen=True)
class InnerTolerance:
    """Vanishing tolerance schedule for the approximate model minimization.

    In ``gap`` mode iteration k solves to duality gap
    ``eps_k = max(floor, min(eps0 (k+1)^-power, adapt * previous improvement))``
    with eps0 defaulting to a tenth of the first improvement; the schedule is
    clipped to be non-increasing. In ``budget`` mode the inner solver instead
    gets an iteration budget that grows linearly with k.
    """

    mode: str = "gap"
    eps0: Optional[float] = None
    power: float = 1.5
    floor: float = 1e-12
    adapt: float = 0.1
    max_iterations: int = 20000
    budget0: int = 100
    budget_step: int = 100

    def __post_init__(self):
        if self.mode not in ("gap", "budget"):
            raise ValueError("mode must be 'gap' or 'budget'")
        if self.eps0 is not None and not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if not self.floor > 0:
            raise ValueError("floor must be positive")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    delta_tol: Optional[float] = None  # None: delta_rtol * (1 + |f(x0)|)
    delta_rtol: float = 1e-8
    time_budget_s: Optional[float] = None
    inner: InnerTolerance = field(default_factory=InnerTolerance)
    check_feasibility: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.delta_tol is not None and not self.delta_tol > 0:
            raise ValueError("delta_tol must be positive")

    def resolve_tol(self, f0):
        if self.delta_tol is not None:
            return self.delta_tol
        return self.delta_rtol * (1.0 + abs(f0))


@dataclass
class IterationRecord:
    """One outer iteration: the objective at the iterate, the model
    improvement measured there, and the step taken from it (gamma = 0 for
    the terminal stationarity probe)."""

    k: int
    f_value: float
    delta: float
    gamma: float
    backtracks: int
    inner_iterations: int
    inner_solves: int
    elapsed_s: float


@dataclass
class SolverTrace:
    records: List[IterationRecord]
    status: str  # "stationary" | "max_iterations" | "time_budget"
    final_x: np.ndarray
    final_f: float
    rho: float
    method: str = ""

    @property
    def f0(self):
        return self.records[0].f_value

    def best_f(self):
        return min(min(r.f_value for r in self.records), self.final_f)

    def total_inner_solves(self):
        return sum(r.inner_solves for r in self.records)

    def arrays(self):
        r = self.records
        return (
            np.array([x.f_value for x in r]),
            np.array([x.delta for x in r]),
            np.array([x.gamma for x in r]),
        )


class _EpsSchedule:
    """Realizes the vanishing-tolerance contract; see InnerTolerance."""

    def __init__(self, inner, f0):
        self.inner = inner
        self.bootstrap = 1e-2 * (1.0 + abs(f0))
        self.eps0 = inner.eps0
        self.prev = math.inf
        self.prev_delta = math.inf

    def eps(self, k):
        if self.inner.mode == "budget":
            return self.inner.floor
        if self.eps0 is None:
            base = self.bootstrap
        else:
            base = self.eps0 * (k + 1.0) ** (-self.inner.power)
        if self.inner.adapt > 0:
            base = min(base, self.inner.adapt * self.prev_delta)
        eps = max(self.inner.floor, min(base, self.prev))
        self.prev = eps
        return eps

    def budget(self, k):
        if self.inner.mode == "budget":
            return self.inner.budget0 + self.inner.budget_step * k
        return self.inner.max_iterations

    def observe(self, delta):
        if self.eps0 is None and delta > 0:
            self.eps0 = max(0.1 * delta, self.inner.floor)
        self.prev_delta = max(delta, self.inner.floor)


def _certified_minimize(model, constraint, eps, warm, budget, tol, schedule_floor):
    """Minimize the model; if the measured improvement is below the
    stationarity tolerance but the certificate is looser than it, continue
    the same solve with a tighter tolerance so that termination is sound.
    The continuations are warm-started from the solve's own state and do not
    count as additional subproblem solves."""
    res = model.minimize(constraint, eps, warm=warm, max_iterations=budget)
    iterations, solves = res.iterations, res.solves
    delta = model.anchor_value - model.value(res.point)
    retries = 0
    while delta <= tol and res.gap > tol and eps > schedule_floor and retries < 6:
        eps = max(min(0.1 * eps, 0.5 * tol), schedule_floor)
        res = model.minimize(constraint, eps, warm=res.state, max_iterations=budget)
        iterations += res.iterations
        delta = model.anchor_value - model.value(res.point)
        retries += 1
    return res, delta, iterations, solves


def mcgm_solve(
    oracle,
    fun,
    constraint,
    x0,
    ls: Optional[LineSearchParams] = None,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable] = None,
    method: str = "mcgm",
    candidate_hook: Optional[Callable] = None,
):
    """Minimize ``fun`` over the set by sequential model minimization.

    Parameters
    ----------
    oracle : model family with an ``instantiate(anchor)`` method.
    fun : objective callable; evaluated exactly inside the line search.
    constraint : ConstraintSet (compact convex). x0 is projected onto it if
        needed.
    ls, cfg : line search parameters and solver configuration.
    callback : called with each IterationRecord as it is appended.
    candidate_hook : optional ``hook(model, x, y) -> y`` to override the
        default choice of the approximate model minimizer as the step target
        (any point with positive improvement is admissible for descent).

    Returns a :class:`SolverTrace`; the terminal record of a ``stationary``
    trace carries the certified improvement (at most the tolerance) and a
    zero step.
    """
    ls = ls or LineSearchParams()
    cfg = cfg or SolverConfig()
    x = require_finite(x0, "x0")
    if not constraint.contains(x):
        x = constraint.project(x)
    f_x = float(fun(x))
    f0 = f_x
    tol = cfg.resolve_tol(f0)
    schedule = _EpsSchedule(cfg.inner, f0)
    records: List[IterationRecord] = []
    warm = None
    status = "max_iterations"
    start = time.perf_counter()

    for k in range(cfg.max_iterations):
        if cfg.check_feasibility and not constraint.contains(x, 1e-7):
            raise RuntimeError(f"iterate left the constraint set at k={k}")
        model = oracle.instantiate(x)
        eps_k = schedule.eps(k)
        res, delta, n_inner, n_solves = _certified_minimize(
            model, constraint, eps_k, warm, schedule.budget(k), tol, cfg.inner.floor
        )
        warm = res.state
        schedule.observe(delta)
        elapsed = time.perf_counter() - start

        # stationarity is decided on the certified improvement, before any
        # candidate hook dampens the step target
        if delta <= tol:
            records.append(
                IterationRecord(k, f_x, delta, 0.0, 0, n_inner, n_solves, elapsed)
            )
            if callback is not None:
                callback(records[-1])
            status = "stationary"
            break

        y = res.point
        if candidate_hook is not None:
            y = candidate_hook(model, x, y)
            delta = model.anchor_value - model.value(y)

        ar = armijo_search(fun, x, y, delta, ls, f_x=f_x)
        records.append(
            IterationRecord(
                k, f_x, delta, ar.gamma, ar.backtracks, n_inner, n_solves, elapsed
            )
        )
        if callback is not None:
            callback(records[-1])
        x = x + ar.gamma * (y - x)
        f_x = ar.f_new
        if (
            cfg.time_budget_s is not None
            and time.perf_counter() - start > cfg.time_budget_s
        ):
            status = "time_budget"
            break

    return SolverTrace(
        records=records, status=status, final_x=x, final_f=f_x, rho=ls.rho, method=method
    )


def stationarity_measure(oracle, x, constraint, eps=1e-10, max_iterations=None):
    """Best available model improvement at x; a value below eps certifies
    eps-approximate stationarity."""
    x = np.asarray(x, dtype=float)
    model = oracle.instantiate(x)
    res = model.minimize(constraint, eps, max_iterations=max_iterations)
    retries = 0
    delta = model.anchor_value - model.value(res.point)
    while res.gap > eps and retries < 6:
        res = model.minimize(constraint, eps, warm=res.state, max_iterations=max_iterations)
        delta = model.anchor_value - model.value(res.point)
        retries += 1
    return delta


@dataclass
class RateCertificate:
    passed: bool
    worst_ratio: float
    worst_k: int
    f_lower: float


def rate_certificate(trace, ls=None, f_lower=None, rtol=1e-9):
    """Check that the running-best improvement obeys the telescoped
    sufficient-decrease bound at every iteration:

        min_{i<=k} delta_i <= (f(x0) - f_lower) / (rho * sum_{i<=k} gamma_i).

    ``f_lower`` defaults to the best objective value in the trace, which
    makes the check conservative. Returns the verdict and the tightest
    observed ratio of the two sides.
    """
    rho = ls.rho if ls is not None else trace.rho
    if f_lower is None:
        f_lower = trace.best_f()
    f_vals, deltas, gammas = trace.arrays()
    f0 = float(f_vals[0])
    best = math.inf
    cum_gamma = 0.0
    worst_ratio = 0.0
    worst_k = -1
    passed = True
    for k in range(len(deltas)):
        best = min(best, float(deltas[k]))
        cum_gamma += float(gammas[k])
        if cum_gamma <= 0.0:
            continue
        rhs = (f0 - f_lower) / (rho * cum_gamma)
        if best > rhs * (1.0 + rtol) + 1e-15:
            passed = False
        ratio = best / rhs if rhs > 0 else (math.inf if best > 0 else 0.0)
        if ratio > worst_ratio:
            worst_ratio = ratio
            worst_k = k
    return RateCertificate(
        passed=passed, worst_ratio=worst_ratio, worst_k=worst_k, f_lower=f_lower
    )


def verify_trace_arrays(f_values, deltas, gammas, rho, final_f=None, rtol=1e-9):
    """Machine-check the per-iteration invariants of a trace given as arrays:
    objective monotonicity, the sufficient-decrease inequality between
    consecutive iterates, non-negative improvements past the tolerance, and
    steps within [0, 1]. Returns a list of human-readable failures."""
    f_values = np.asarray(f_values, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    problems = []
    scale = 1.0 + float(np.max(np.abs(f_values), initial=0.0))
    seq = list(f_values) + ([final_f] if final_f is not None else [])
    for k in range(len(seq) - 1):
        if seq[k + 1] > seq[k] + rtol * scale:
            problems.append(f"objective increased at k={k}")
        if k < len(deltas) and seq[k + 1] > seq[k] - rho * gammas[k] * deltas[k] + rtol * scale:
            problems.append(f"sufficient decrease violated at k={k}")
    if np.any(gammas < 0) or np.any(gammas > 1):
        problems.append("step size outside [0, 1]")
    if np.any(deltas < -rtol * scale):
        problems.append("negative model improvement recorded")
    return problems
