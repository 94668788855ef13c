"""Structured matrix factorization demo: approximate A by a product X Y with
X and Y constrained to problem-specific compact convex sets.

    min over X in XSet, Y in YSet of  0.5 ||A - X Y||_F^2

The smooth coupling is linearized, which makes the subproblems separate over
the factors: per-column oracles for X (normalized atoms or simplex columns)
and either an entrywise-l1 ball or a nuclear norm ball for Y, whose linear
oracle needs only the dominant singular pair. The hybrid mode keeps a
quadratic proximal term on the Y block instead (proximal step on Y,
linear-oracle step on X).

Flattening conventions: X column-major (its sets act per column), Y row-major
(the nuclear ball reshapes row-major); the solver variable is
``[vec(X), vec(Y)]`` in that order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import L1Ball, L2Ball, NuclearBall, ProductSet, Simplex, require_finite
from .models import AdditiveCompositeOracle, BlockHybridOracle, ZeroPenalty
from .runner import write_trace_csv
from .solver import LineSearchParams, SolverConfig, mcgm_solve

__all__ = [
    "MfProblem",
    "unit_atoms_set",
    "columnwise_simplex_set",
    "sparsity_ball_set",
    "low_rank_ball_set",
    "pack_factors",
    "unpack_factors",
    "mf_objective",
    "mf_gradient",
    "make_mf_sets",
    "make_mf_oracle",
    "mf_demo",
]


def unit_atoms_set(rows, cols):
    """Per-column l2 unit balls; every column after the first is additionally
    mean-zero (the first column keeps a free mean so constant offsets remain
    representable)."""
    return ProductSet(
        [L2Ball(rows, 1.0, mean_zero=(j > 0)) for j in range(cols)]
    )


def columnwise_simplex_set(rows, cols):
    """Each column on the unit simplex: non-negative entries summing to one."""
    return ProductSet([Simplex(rows) for _ in range(cols)])


def sparsity_ball_set(rows, cols, radius):
    """Entrywise l1 ball over the whole matrix, promoting sparse factors."""
    return L1Ball(rows * cols, radius)


def low_rank_ball_set(rows, cols, radius):
    """Nuclear norm ball, the convex relaxation of a rank constraint."""
    return NuclearBall(rows, cols, radius)


@dataclass
class MfProblem:
    """One factorization instance. ``x_kind`` in {"unit_atoms", "simplex"},
    ``y_kind`` in {"sparsity", "low_rank"}, ``model`` in {"cg", "hybrid"}.

    ``x_penalty`` is reserved for a convex regularizer on X; with the shipped
    column sets no closed-form oracle step exists for a non-zero penalty, so
    only ``None`` is accepted.
    """

    A: np.ndarray
    inner_dim: int
    x_kind: str = "unit_atoms"
    y_kind: str = "sparsity"
    radius: float = 1.0
    model: str = "cg"
    tau: float = 1.0
    x_penalty: object = None

    def __post_init__(self):
        self.A = require_finite(self.A, "A")
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix")
        if self.inner_dim < 1:
            raise ValueError("inner_dim must be positive")
        if self.x_kind not in ("unit_atoms", "simplex"):
            raise ValueError(f"unknown x_kind {self.x_kind!r}")
        if self.y_kind not in ("sparsity", "low_rank"):
            raise ValueError(f"unknown y_kind {self.y_kind!r}")
        if self.model not in ("cg", "hybrid"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.x_penalty is not None and not isinstance(self.x_penalty, ZeroPenalty):
            raise NotImplementedError(
                "a non-zero X regularizer has no oracle step with these sets"
            )
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def shape(self):
        m, n = self.A.shape
        return m, self.inner_dim, n

    @property
    def x_size(self):
        m, k, _ = self.shape
        return m * k

    @property
    def y_size(self):
        _, k, n = self.shape
        return k * n


def pack_factors(problem, X, Y):
    return np.concatenate([np.asarray(X, float).ravel(order="F"),
                           np.asarray(Y, float).ravel()])


def unpack_factors(problem, v):
    m, k, n = problem.shape
    v = np.asarray(v, dtype=float)
    X = v[: m * k].reshape(m, k, order="F")
    Y = v[m * k :].reshape(k, n)
    return X, Y


def mf_objective(problem):
    def objective(v):
        X, Y = unpack_factors(problem, v)
        R = problem.A - X @ Y
        return 0.5 * float((R * R).sum())

    return objective


def mf_gradient(problem):
    """Gradient of the smooth coupling: d/dX = (XY - A) Y^T and
    d/dY = X^T (XY - A), packed like the variable."""

    def gradient(v):
        X, Y = unpack_factors(problem, v)
        R = X @ Y - problem.A
        return np.concatenate([(R @ Y.T).ravel(order="F"), (X.T @ R).ravel()])

    return gradient


def make_mf_sets(problem):
    m, k, n = problem.shape
    if problem.x_kind == "unit_atoms":
        x_set = unit_atoms_set(m, k)
    else:
        x_set = columnwise_simplex_set(m, k)
    if problem.y_kind == "sparsity":
        y_set = sparsity_ball_set(k, n, problem.radius)
    else:
        y_set = low_rank_ball_set(k, n, problem.radius)
    return ProductSet([x_set, y_set]), x_set, y_set


def make_mf_oracle(problem):
    h = mf_objective(problem)
    grad = mf_gradient(problem)
    if problem.model == "cg":
        return AdditiveCompositeOracle(problem.x_penalty, h, grad)
    # hybrid: quadratic proximal term on the Y block, oracle step on X
    return BlockHybridOracle(
        problem.x_penalty,
        None,
        h,
        grad,
        problem.tau,
        sizes=(problem.x_size, problem.y_size),
        prox_block=1,
    )


def default_start(problem, seed=0):
    """Deterministic feasible start: sampled X atoms, zero Y."""
    _, x_set, _ = make_mf_sets(problem)
    rng = np.random.default_rng(seed)
    x0 = x_set.sample(rng)
    return np.concatenate([x0, np.zeros(problem.y_size)])


def mf_demo(
    problem,
    ls: Optional[LineSearchParams] = None,
    cfg: Optional[SolverConfig] = None,
    out_dir: Optional[str] = None,
    x0=None,
    seed=0,
):
    """Run the factorization and optionally write the factors and the trace.

    Returns ``(trace, X, Y)``; with ``out_dir`` set, also writes
    ``factors.json`` and ``mf_trace.csv`` there.
    """
    constraint, _, _ = make_mf_sets(problem)
    fun = mf_objective(problem)
    oracle = make_mf_oracle(problem)
    if x0 is None:
        x0 = default_start(problem, seed=seed)
    trace = mcgm_solve(oracle, fun, constraint, x0, ls=ls, cfg=cfg, method=f"mf_{problem.model}")
    X, Y = unpack_factors(problem, trace.final_x)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        payload = {
            "schema": "modelcg.mf-factors/1",
            "x_kind": problem.x_kind,
            "y_kind": problem.y_kind,
            "model": problem.model,
            "radius": problem.radius,
            "residual_fro": float(np.linalg.norm(problem.A - X @ Y)),
            "X": X.tolist(),
            "Y": Y.tolist(),
        }
        with open(os.path.join(out_dir, "factors.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
        write_trace_csv(trace, os.path.join(out_dir, "mf_trace.csv"), trace.best_f())
    return trace, X, Y
