"""Convex model functions anchored at an iterate.

A model oracle turns a problem description into, for any anchor point, a
convex surrogate that matches the objective value at the anchor and stays
within an error growth function of it nearby. Each family also knows how to
(approximately) minimize its surrogate over a compact convex set, which is
the work horse of the conditional-gradient outer loop:

* ``LinearModelOracle``        -- plain first-order linearization, minimized by
                                  one call to the set's linear oracle.
* ``AdditiveCompositeOracle``  -- keeps a convex penalty exactly, linearizes
                                  the smooth part.
* ``BlockHybridOracle``        -- additive composite on two blocks with an
                                  extra quadratic on one of them: a proximal
                                  step on that block, a linear-oracle step on
                                  the other.
* ``NewtonModelOracle``        -- adds the PSD-projected Hessian quadratic;
                                  minimized by accelerated projected gradient.
* ``GaussNewtonOracle``        -- linearizes an inner residual map inside a
                                  convex outer loss; the l1 case is handed to
                                  the primal-dual inner solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Box, ProductSet, psd_projection, require_finite
from .inner import PiecewiseLinearSubproblem, pdhg_solve

__all__ = [
    "ZeroPenalty",
    "WeightedL1",
    "L1Loss",
    "ModelMinimum",
    "ModelInstance",
    "LinearModelOracle",
    "AdditiveCompositeOracle",
    "BlockHybridOracle",
    "NewtonModelOracle",
    "GaussNewtonOracle",
    "model_improvement",
    "verify_model_error",
    "ModelErrorReport",
    "prox_penalized",
    "linear_composite_min",
]


# ---------------------------------------------------------------------------
# penalties (the convex term kept exactly by composite models)
# ---------------------------------------------------------------------------


class ZeroPenalty:
    """The identically-zero penalty."""

    def value(self, x):
        return 0.0


class WeightedL1:
    """weight * sum of |x_j| over a coordinate subset (all coordinates if
    ``mask`` is None)."""

    def __init__(self, weight, mask=None):
        if weight < 0:
            raise ValueError("weight must be non-negative")
        self.weight = float(weight)
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)

    def weights_vector(self, n):
        if self.mask is None:
            return np.full(n, self.weight)
        if self.mask.shape != (n,):
            raise ValueError("penalty mask does not match the dimension")
        return np.where(self.mask, self.weight, 0.0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.mask is not None and self.mask.shape != x.shape:
            raise ValueError("penalty mask does not match the dimension")
        sub = x if self.mask is None else x[self.mask]
        return self.weight * float(np.abs(sub).sum())


def _is_zero(penalty):
    return penalty is None or isinstance(penalty, ZeroPenalty)


def prox_penalized(penalty, z, step, constraint):
    """argmin penalty(u) + (1/(2 step)) ||u - z||^2 over the set.

    Exact for a zero penalty on any projectable set, and for a weighted l1
    penalty on a box (soft-threshold then clamp, which is exact because the
    1-D objective is convex). ``step`` may be a scalar or a vector.
    """
    z = np.asarray(z, dtype=float)
    if _is_zero(penalty):
        return constraint.project(z)
    if isinstance(penalty, WeightedL1) and isinstance(constraint, Box):
        level = np.asarray(step, dtype=float) * penalty.weights_vector(z.size)
        s = np.sign(z) * np.maximum(np.abs(z) - level, 0.0)
        return np.clip(s, constraint.lo, constraint.hi)
    raise NotImplementedError(
        "no proximal step for this penalty/constraint combination"
    )


def linear_composite_min(penalty, c, constraint):
    """argmin penalty(u) + <c, u> over the set, exactly.

    A zero penalty reduces to the set's linear oracle. A weighted l1 penalty
    over a box separates per coordinate; each 1-D piecewise-linear term is
    minimized over {lo, 0, hi}.
    """
    c = np.asarray(c, dtype=float)
    if _is_zero(penalty):
        return constraint.lmo(c)
    if isinstance(penalty, WeightedL1) and isinstance(constraint, Box):
        lo, hi = constraint.lo, constraint.hi
        w = penalty.weights_vector(c.size)
        v_lo = w * np.abs(lo) + c * lo
        v_hi = w * np.abs(hi) + c * hi
        out = np.where(v_hi < v_lo, hi, lo)
        val = np.minimum(v_lo, v_hi)
        zero_ok = (lo <= 0.0) & (hi >= 0.0)
        return np.where(zero_ok & (val > 0.0), 0.0, out)
    raise NotImplementedError(
        "no linear-composite minimizer for this penalty/constraint combination"
    )


# ---------------------------------------------------------------------------
# model instances
# ---------------------------------------------------------------------------


@dataclass
class ModelMinimum:
    """Result of (approximately) minimizing a model over the constraint set.

    ``gap`` is a certified upper bound on the model suboptimality of
    ``point`` (0 for closed-form solves); ``state`` is warm-start data for
    the next solve of the same family.
    """

    point: np.ndarray
    gap: float
    iterations: int = 0
    state: object = None
    solves: int = 1


class ModelInstance:
    """A convex surrogate anchored at one point.

    ``value(anchor)`` equals the true objective at the anchor by
    construction; ``anchor_value`` stores that number.
    """

    family = "abstract"

    def __init__(self, anchor, anchor_value):
        self.anchor = np.asarray(anchor, dtype=float)
        self.anchor_value = float(anchor_value)

    def value(self, x):
        raise NotImplementedError

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        """An eps-approximate minimizer of the model over the set."""
        raise NotImplementedError

    def minimize_proximal(self, constraint, eps, tau, warm=None, max_iterations=None):
        """Same, for the model plus ||x - anchor||^2 / (2 tau)."""
        raise NotImplementedError


class _LinearModel(ModelInstance):
    family = "linear"

    def __init__(self, anchor, f_value, grad):
        super().__init__(anchor, f_value)
        self.grad = require_finite(grad, "grad")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.anchor_value + float(self.grad @ (x - self.anchor))

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        return ModelMinimum(point=constraint.lmo(self.grad), gap=0.0)

    def minimize_proximal(self, constraint, eps, tau, warm=None, max_iterations=None):
        y = constraint.project(self.anchor - tau * self.grad)
        return ModelMinimum(point=y, gap=0.0)


class LinearModelOracle:
    """First-order linearization of a smooth objective."""

    family = "linear"

    def __init__(self, fun, grad, omega=None):
        self.fun = fun
        self.grad = grad
        self.omega = omega

    def instantiate(self, anchor):
        anchor = np.asarray(anchor, dtype=float)
        return _LinearModel(anchor, float(self.fun(anchor)), self.grad(anchor))


class _AdditiveCompositeModel(ModelInstance):
    family = "additive_composite"

    def __init__(self, anchor, penalty, h_value, h_grad):
        self.penalty = penalty if penalty is not None else ZeroPenalty()
        self.h_value = float(h_value)
        self.h_grad = require_finite(h_grad, "h_grad")
        super().__init__(anchor, self.h_value + self.penalty.value(anchor))

    def smooth_part(self, x):
        return self.h_value + float(self.h_grad @ (np.asarray(x, float) - self.anchor))

    def value(self, x):
        return self.penalty.value(x) + self.smooth_part(x)

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        y = linear_composite_min(self.penalty, self.h_grad, constraint)
        return ModelMinimum(point=y, gap=0.0)

    def minimize_proximal(self, constraint, eps, tau, warm=None, max_iterations=None):
        y = prox_penalized(self.penalty, self.anchor - tau * self.h_grad, tau, constraint)
        return ModelMinimum(point=y, gap=0.0)


class AdditiveCompositeOracle:
    """Convex penalty kept exactly plus a linearized smooth part.

    ``h`` and ``grad_h`` evaluate the smooth part and its gradient. The model
    error is entirely the linearization error of ``h``.
    """

    family = "additive_composite"

    def __init__(self, penalty, h, grad_h, omega=None):
        self.penalty = penalty
        self.h = h
        self.grad_h = grad_h
        self.omega = omega

    def instantiate(self, anchor):
        anchor = np.asarray(anchor, dtype=float)
        return _AdditiveCompositeModel(
            anchor, self.penalty, float(self.h(anchor)), self.grad_h(anchor)
        )


class _BlockHybridModel(ModelInstance):
    family = "hybrid"

    def __init__(self, anchor, penalties, h_value, h_grad, tau, sizes, prox_block):
        self.penalties = penalties
        self.h_value = float(h_value)
        self.h_grad = require_finite(h_grad, "h_grad")
        self.tau = float(tau)
        self.sizes = tuple(sizes)
        self.prox_block = prox_block
        n1 = sizes[0]
        self.slices = (slice(0, n1), slice(n1, n1 + sizes[1]))
        anchor = np.asarray(anchor, dtype=float)
        base = self.h_value + sum(
            p.value(anchor[s]) for p, s in zip(penalties, self.slices)
        )
        super().__init__(anchor, base)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.anchor
        val = self.h_value + float(self.h_grad @ d)
        for p, s in zip(self.penalties, self.slices):
            val += p.value(x[s])
        dp = d[self.slices[self.prox_block]]
        return val + float(dp @ dp) / (2.0 * self.tau)

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        if not (isinstance(constraint, ProductSet) and len(constraint.sets) == 2):
            raise ValueError("hybrid models need a two-block product set")
        if tuple(s.dim for s in constraint.sets) != self.sizes:
            raise ValueError("product set blocks do not match the model's split")
        parts = []
        for b, (pen, s) in enumerate(zip(self.penalties, self.slices)):
            g_b = self.h_grad[s]
            set_b = constraint.sets[b]
            if b == self.prox_block:
                z = self.anchor[s] - self.tau * g_b
                parts.append(prox_penalized(pen, z, self.tau, set_b))
            else:
                parts.append(linear_composite_min(pen, g_b, set_b))
        return ModelMinimum(point=np.concatenate(parts), gap=0.0)


class BlockHybridOracle:
    """Additive composite model on two blocks, with a quadratic proximal term
    on one of them: that block takes proximal-gradient steps, the other takes
    conditional-gradient steps."""

    family = "hybrid"

    def __init__(self, penalty_a, penalty_b, h, grad_h, tau, sizes, prox_block=0, omega=None):
        if not tau > 0:
            raise ValueError("tau must be positive")
        if prox_block not in (0, 1):
            raise ValueError("prox_block must be 0 or 1")
        self.penalties = (
            penalty_a if penalty_a is not None else ZeroPenalty(),
            penalty_b if penalty_b is not None else ZeroPenalty(),
        )
        self.h = h
        self.grad_h = grad_h
        self.tau = float(tau)
        self.sizes = (int(sizes[0]), int(sizes[1]))
        self.prox_block = int(prox_block)
        self.omega = omega

    def instantiate(self, anchor):
        anchor = np.asarray(anchor, dtype=float)
        if anchor.size != sum(self.sizes):
            raise ValueError("anchor does not match the block sizes")
        return _BlockHybridModel(
            anchor,
            self.penalties,
            float(self.h(anchor)),
            self.grad_h(anchor),
            self.tau,
            self.sizes,
            self.prox_block,
        )


class _NewtonModel(ModelInstance):
    family = "newton"

    def __init__(self, anchor, penalty, h_value, h_grad, curvature, lam_max):
        self.penalty = penalty if penalty is not None else ZeroPenalty()
        self.h_value = float(h_value)
        self.h_grad = require_finite(h_grad, "h_grad")
        self.curvature = curvature  # PSD-projected Hessian
        self.lam_max = float(lam_max)
        super().__init__(anchor, self.h_value + self.penalty.value(anchor))

    def quad_grad(self, x, extra_tau=None):
        d = np.asarray(x, float) - self.anchor
        g = self.h_grad + self.curvature @ d
        if extra_tau is not None:
            g = g + d / extra_tau
        return g

    def value(self, x):
        d = np.asarray(x, float) - self.anchor
        return (
            self.penalty.value(x)
            + self.h_value
            + float(self.h_grad @ d)
            + 0.5 * float(d @ (self.curvature @ d))
        )

    def _fw_gap(self, x, constraint, extra_tau=None):
        c = self.quad_grad(x, extra_tau)
        v = linear_composite_min(self.penalty, c, constraint)
        gap = float(c @ (x - v)) + self.penalty.value(x) - self.penalty.value(v)
        return gap, v

    def _solve(self, constraint, eps, warm, max_iterations, extra_tau):
        lip = self.lam_max + (1.0 / extra_tau if extra_tau is not None else 0.0)
        if lip <= 0.0:
            # no curvature: the model is additive composite, solve exactly
            y = linear_composite_min(self.penalty, self.h_grad, constraint)
            return ModelMinimum(point=y, gap=0.0)
        max_iterations = max_iterations or 5000
        if warm is not None and np.shape(warm) == self.anchor.shape:
            x = constraint.project(np.asarray(warm, float))
        else:
            x = constraint.project(self.anchor)
        z, t = x, 1.0
        prox_val = self.value(x) + (
            0.0
            if extra_tau is None
            else float((x - self.anchor) @ (x - self.anchor)) / (2 * extra_tau)
        )
        gap = np.inf
        it = 0
        for it in range(1, max_iterations + 1):
            x_new = prox_penalized(
                self.penalty, z - self.quad_grad(z, extra_tau) / lip, 1.0 / lip, constraint
            )
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            val_new = self.value(x_new) + (
                0.0
                if extra_tau is None
                else float((x_new - self.anchor) @ (x_new - self.anchor)) / (2 * extra_tau)
            )
            if val_new > prox_val:  # monotone restart
                z, t_new = x, 1.0
            else:
                x, prox_val = x_new, val_new
            t = t_new
            if it % 10 == 0 or it == max_iterations:
                gap, _ = self._fw_gap(x, constraint, extra_tau)
                if gap <= eps:
                    break
        return ModelMinimum(point=x, gap=float(gap), iterations=it, state=x)

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        return self._solve(constraint, eps, warm, max_iterations, None)

    def minimize_proximal(self, constraint, eps, tau, warm=None, max_iterations=None):
        return self._solve(constraint, eps, warm, max_iterations, float(tau))


class NewtonModelOracle:
    """Second-order model: the Hessian of the smooth part is projected onto
    the PSD cone to keep the surrogate convex. Minimization runs accelerated
    projected gradient with a linear-oracle duality gap as stopping rule."""

    family = "newton"

    def __init__(self, penalty, h, grad_h, hess_h, omega=None):
        self.penalty = penalty
        self.h = h
        self.grad_h = grad_h
        self.hess_h = hess_h
        self.omega = omega

    def instantiate(self, anchor):
        anchor = np.asarray(anchor, dtype=float)
        H = psd_projection(np.asarray(self.hess_h(anchor), dtype=float))
        lam_max = float(np.linalg.eigvalsh(H)[-1]) if H.size else 0.0
        return _NewtonModel(
            anchor, self.penalty, float(self.h(anchor)), self.grad_h(anchor), H, lam_max
        )


class L1Loss:
    """z -> sum_i |z_i - target_i|; 1-Lipschitz in the l1 norm."""

    def __init__(self, targets):
        self.targets = require_finite(targets, "targets")

    def value(self, z):
        return float(np.abs(np.asarray(z, float) - self.targets).sum())


class _GaussNewtonModel(ModelInstance):
    family = "gauss_newton"

    def __init__(self, anchor, loss, penalty, F_value, jac, pdhg_opts, minimizer):
        self.loss = loss
        self.penalty = penalty if penalty is not None else ZeroPenalty()
        self.F_value = require_finite(F_value, "F_value")
        self.jac = require_finite(jac, "jacobian")
        if self.jac.shape[0] != self.F_value.size:
            raise ValueError("jacobian rows do not match the residual dimension")
        self.pdhg_opts = pdhg_opts
        self.minimizer = minimizer
        anchor = np.asarray(anchor, dtype=float)
        if self.jac.shape[1] != anchor.size:
            raise ValueError("jacobian columns do not match the anchor dimension")
        super().__init__(anchor, loss.value(F_value) + self.penalty.value(anchor))

    def linearized_residual(self, x):
        x = np.asarray(x, dtype=float)
        return self.F_value + self.jac @ (x - self.anchor)

    def value(self, x):
        return self.loss.value(self.linearized_residual(x)) + self.penalty.value(x)

    def subproblem(self, constraint):
        """The equivalent box-constrained piecewise-linear problem (l1 loss)."""
        if not isinstance(self.loss, L1Loss):
            raise NotImplementedError("only the l1 outer loss maps to a subproblem")
        if not isinstance(constraint, Box):
            raise NotImplementedError("the inner solver handles box constraints")
        n = self.anchor.size
        if _is_zero(self.penalty):
            weight, mask = 0.0, np.zeros(n, dtype=bool)
        elif isinstance(self.penalty, WeightedL1):
            weight = self.penalty.weight
            mask = (
                np.ones(n, dtype=bool) if self.penalty.mask is None else self.penalty.mask
            )
        else:
            raise NotImplementedError("unsupported penalty for the inner solver")
        shifted = self.loss.targets - self.F_value + self.jac @ self.anchor
        return PiecewiseLinearSubproblem(
            K=self.jac,
            target=shifted,
            l1_weight=weight,
            l1_mask=mask,
            lo=constraint.lo,
            hi=constraint.hi,
        )

    def _run(self, sub, eps, warm, max_iterations):
        res = pdhg_solve(
            sub,
            warm=warm,
            gap_tol=eps,
            max_iters=max_iterations or self.pdhg_opts.get("max_iters", 20000),
            check_every=self.pdhg_opts.get("check_every", 25),
            beta=self.pdhg_opts.get("beta", 1.0),
        )
        return ModelMinimum(
            point=res.u, gap=res.gap, iterations=res.iterations, state=res.state
        )

    def minimize(self, constraint, eps, warm=None, max_iterations=None):
        if self.minimizer is not None:
            return self.minimizer(self, constraint, eps, warm)
        return self._run(self.subproblem(constraint), eps, warm, max_iterations)

    def minimize_proximal(self, constraint, eps, tau, warm=None, max_iterations=None):
        if self.minimizer is not None:
            raise NotImplementedError("custom minimizers have no proximal variant")
        sub = self.subproblem(constraint).with_prox(tau, self.anchor)
        return self._run(sub, eps, warm, max_iterations)


class GaussNewtonOracle:
    """Model family for objectives loss(F(x)) + penalty(x): the residual map
    F is linearized at the anchor inside the (Lipschitz, convex) outer loss.

    With an :class:`L1Loss` and a weighted-l1 penalty over a box the model
    minimization is handed to the primal-dual inner solver; any other loss
    needs a caller-supplied ``minimizer(model, constraint, eps, warm)``.
    """

    family = "gauss_newton"

    def __init__(self, residual, jacobian, loss, penalty=None, omega=None,
                 minimizer=None, **pdhg_opts):
        self.residual = residual
        self.jacobian = jacobian
        self.loss = loss
        self.penalty = penalty
        self.omega = omega
        self.minimizer = minimizer
        self.pdhg_opts = pdhg_opts

    def instantiate(self, anchor):
        anchor = np.asarray(anchor, dtype=float)
        return _GaussNewtonModel(
            anchor,
            self.loss,
            self.penalty,
            np.asarray(self.residual(anchor), dtype=float),
            np.asarray(self.jacobian(anchor), dtype=float),
            self.pdhg_opts,
            self.minimizer,
        )


# ---------------------------------------------------------------------------
# model improvement and verification
# ---------------------------------------------------------------------------


def model_improvement(model, y, constraint=None, tol=1e-9):
    """model(anchor) - model(y), the progress measure of one surrogate step.

    Non-negative whenever y is a model minimizer (the anchor is feasible).
    If a constraint set is given, infeasible y is rejected.
    """
    if constraint is not None and not constraint.contains(y, tol):
        raise ValueError("candidate point lies outside the constraint set")
    return model.anchor_value - model.value(y)


@dataclass
class ModelErrorReport:
    max_violation: float
    n_violations: int
    n_samples: int
    passed: bool
    worst_anchor: Optional[np.ndarray] = None
    worst_point: Optional[np.ndarray] = None


def verify_model_error(oracle, fun, constraint, omega, n_samples=300, seed=0):
    """Sample anchor/point pairs in the set and check
    |f(x) - model(x)| <= omega(||x - anchor||).

    Passes when the worst violation is at most 1e-8 * (1 + |f|); a models
    family paired with an invalid growth function is expected to fail, which
    makes this usable as a negative test as well.
    """
    rng = np.random.default_rng(seed)
    max_violation = -np.inf
    worst = (None, None)
    n_bad = 0
    scale = 1.0
    for _ in range(n_samples):
        anchor = constraint.sample(rng)
        model = oracle.instantiate(anchor)
        x = constraint.sample(rng)
        fx = float(fun(x))
        scale = max(scale, 1.0 + abs(fx))
        err = abs(fx - model.value(x))
        violation = err - float(omega(float(np.linalg.norm(x - anchor))))
        if violation > max_violation:
            max_violation = violation
            worst = (anchor, x)
        if violation > 1e-8 * (1.0 + abs(fx)):
            n_bad += 1
    return ModelErrorReport(
        max_violation=float(max_violation),
        n_violations=n_bad,
        n_samples=n_samples,
        passed=n_bad == 0,
        worst_anchor=worst[0],
        worst_point=worst[1],
    )
