"""Sparse robust regression benchmark on sums of decaying exponentials.

The ground-truth signal is F_i(a, b) = sum_j a_j exp(-b_j x_i) observed under
heavy-tailed (Laplacian) noise, which motivates an l1 data-fidelity term; the
amplitude vector a is mostly zero, which motivates an l1 penalty on it:

    min over (a, b) in [0, a_max]^P x [0, b_max]^P of
        sum_i |F_i(a, b) - y_i| + mu * sum_j |a_j|

Linearizing F inside the l1 loss turns each model subproblem into the
box-constrained piecewise-linear form handled by :mod:`modelcg.inner`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box, PowerGrowth
from .inner import PiecewiseLinearSubproblem
from .models import GaussNewtonOracle, L1Loss, WeightedL1

__all__ = [
    "RegressionDataset",
    "generate_regression_data",
    "eval_F",
    "eval_jacobian",
    "build_linearization",
    "make_objective",
    "make_constraint_set",
    "make_oracle",
    "make_subproblem",
    "model_error_growth",
    "save_dataset",
    "load_dataset",
]

DATASET_SCHEMA = "modelcg.regression-dataset/1"


@dataclass(frozen=True)
class RegressionDataset:
    """Covariate-observation pairs plus the generating ground truth."""

    covariates: np.ndarray
    observations: np.ndarray
    a_true: np.ndarray
    b_true: np.ndarray
    P: int
    M: int
    mu: float
    a_max: float
    b_max: float
    sparsity: float
    noise_scale: float
    seed: int

    @property
    def dim(self):
        return 2 * self.P

    def split(self, u):
        u = np.asarray(u, dtype=float)
        return u[: self.P], u[self.P :]


def eval_F(a, b, x_points):
    """Vector of model responses sum_j a_j exp(-b_j x_i) at each covariate."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x_points, dtype=float)
    return np.exp(-np.outer(x, b)) @ a


def eval_jacobian(a, b, x_points):
    """M x 2P Jacobian of ``eval_F``: columns [d/da_j, d/db_j].

    d/da_j = exp(-b_j x_i) and d/db_j = -a_j x_i exp(-b_j x_i).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x_points, dtype=float)
    E = np.exp(-np.outer(x, b))
    return np.hstack([E, -(x[:, None] * E) * a[None, :]])


def generate_regression_data(
    P=100, M=1000, mu=80.0, a_max=20.0, b_max=5.0, sparsity=0.8,
    noise_scale=0.5, seed=0,
):
    """Draw a dataset: covariates equally spaced on [0, 1], amplitudes and
    decay rates uniform on their boxes, ceil(sparsity * P) amplitudes zeroed,
    Laplacian noise by inverse-CDF sampling. Regeneration from the same
    parameters and seed is bit-identical.
    """
    if P < 1 or M < 1:
        raise ValueError("P and M must be positive")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must lie in [0, 1)")
    if mu < 0 or a_max <= 0 or b_max <= 0 or noise_scale < 0:
        raise ValueError("mu/a_max/b_max/noise_scale out of range")
    x = np.linspace(0.0, 1.0, M)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, a_max, P)
    b = rng.uniform(0.0, b_max, P)
    n_zero = math.ceil(sparsity * P)
    if n_zero:
        a[rng.choice(P, size=n_zero, replace=False)] = 0.0
    y = eval_F(a, b, x)
    if noise_scale > 0:
        u = rng.random(M)
        # clip keeps the measure-zero endpoint u = 0 out of log1p(-1)
        d = np.minimum(np.abs(u - 0.5), 0.5 * (1.0 - 1e-15))
        y = y - noise_scale * np.sign(u - 0.5) * np.log1p(-2.0 * d)
    return RegressionDataset(
        covariates=x, observations=y, a_true=a, b_true=b, P=P, M=M, mu=float(mu),
        a_max=float(a_max), b_max=float(b_max), sparsity=float(sparsity),
        noise_scale=float(noise_scale), seed=int(seed),
    )


def make_constraint_set(dataset):
    lo = np.zeros(dataset.dim)
    hi = np.concatenate(
        [np.full(dataset.P, dataset.a_max), np.full(dataset.P, dataset.b_max)]
    )
    return Box(lo, hi)


def make_objective(dataset):
    """The benchmark objective as a plain callable on u = (a, b)."""
    x, y, mu = dataset.covariates, dataset.observations, dataset.mu

    def objective(u):
        a, b = dataset.split(u)
        return float(np.abs(eval_F(a, b, x) - y).sum()) + mu * float(np.abs(a).sum())

    return objective


def amplitude_mask(dataset):
    mask = np.zeros(dataset.dim, dtype=bool)
    mask[: dataset.P] = True
    return mask


def make_oracle(dataset, **pdhg_opts):
    """Model oracle for the benchmark: the residual map is linearized inside
    the l1 loss, the amplitude penalty is kept exactly, and the model
    subproblems go to the primal-dual inner solver."""
    x = dataset.covariates

    def residual(u):
        a, b = dataset.split(u)
        return eval_F(a, b, x)

    def jacobian(u):
        a, b = dataset.split(u)
        return eval_jacobian(a, b, x)

    return GaussNewtonOracle(
        residual,
        jacobian,
        L1Loss(dataset.observations),
        penalty=WeightedL1(dataset.mu, amplitude_mask(dataset)),
        omega=model_error_growth(dataset),
        **pdhg_opts,
    )


def model_error_growth(dataset):
    """Valid quadratic growth bound for the linearization error.

    Each response's Hessian decomposes into independent 2x2 blocks per
    component j with entries bounded using exp(-b x) <= 1, x <= 1, a <= a_max,
    so its spectral norm is at most sqrt(2 + a_max^2); summing the M rows of
    the l1 loss gives |f - model| <= M sqrt(2 + a_max^2) / 2 * t^2.
    """
    c = dataset.M * math.sqrt(2.0 + dataset.a_max**2)
    return PowerGrowth(coefficient=c, exponent=1.0)


def build_linearization(dataset, u):
    """Jacobian K at u and the shifted observations of the linearized fit,
    so that the model data term reads sum_i |(K v - shifted)_i| in v."""
    a, b = dataset.split(u)
    K = eval_jacobian(a, b, dataset.covariates)
    shifted = dataset.observations - eval_F(a, b, dataset.covariates) + K @ np.asarray(u, float)
    return K, shifted


def make_subproblem(dataset, u, tau=None):
    """The inner subproblem anchored at u (optionally with a proximal term)."""
    K, shifted = build_linearization(dataset, u)
    box = make_constraint_set(dataset)
    sub = PiecewiseLinearSubproblem(
        K=K,
        target=shifted,
        l1_weight=dataset.mu,
        l1_mask=amplitude_mask(dataset),
        lo=box.lo,
        hi=box.hi,
    )
    return sub if tau is None else sub.with_prox(tau, np.asarray(u, float))


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def save_dataset(dataset, path):
    payload = {
        "schema": DATASET_SCHEMA,
        "P": dataset.P,
        "M": dataset.M,
        "mu": dataset.mu,
        "a_max": dataset.a_max,
        "b_max": dataset.b_max,
        "sparsity": dataset.sparsity,
        "noise_scale": dataset.noise_scale,
        "seed": dataset.seed,
        "covariates": dataset.covariates.tolist(),
        "observations": dataset.observations.tolist(),
        "a_true": dataset.a_true.tolist(),
        "b_true": dataset.b_true.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_dataset(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"unrecognized dataset schema: {payload.get('schema')!r}")
    return RegressionDataset(
        covariates=np.asarray(payload["covariates"], dtype=float),
        observations=np.asarray(payload["observations"], dtype=float),
        a_true=np.asarray(payload["a_true"], dtype=float),
        b_true=np.asarray(payload["b_true"], dtype=float),
        P=int(payload["P"]),
        M=int(payload["M"]),
        mu=float(payload["mu"]),
        a_max=float(payload["a_max"]),
        b_max=float(payload["b_max"]),
        sparsity=float(payload["sparsity"]),
        noise_scale=float(payload["noise_scale"]),
        seed=int(payload["seed"]),
    )
