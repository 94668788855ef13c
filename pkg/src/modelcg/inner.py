"""Preconditioned primal-dual splitting for the box-constrained convex
subproblems that arise from linearized l1 regression models:

    min_{lo <= u <= hi}  sum_i |(K u - target)_i|  +  l1_weight * sum_{j in mask} |u_j|
                         [+ 1/(2 tau) ||u - center||^2]

The diagonal step sizes are computed from the entries of K, the dual of the
l1 data term is kept in [-1, 1] by clipping, and a Fenchel duality gap serves
as the stopping certificate. A multi-resolution grid oracle provides ground
truth for small instances.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Optional

import numpy as np

from .geometry import require_finite

__all__ = [
    "PiecewiseLinearSubproblem",
    "PdState",
    "PdhgResult",
    "precond_steps",
    "pdhg_solve",
    "primal_dual_gap",
    "brute_force_subproblem",
]


@dataclass(frozen=True)
class PiecewiseLinearSubproblem:
    """Data of one inner subproblem (see module docstring for the objective).

    ``l1_mask`` flags the coordinates carrying the l1 penalty. The optional
    proximal term (``prox_tau``, ``prox_center``) makes the objective strongly
    convex; both must be given together.
    """

    K: np.ndarray
    target: np.ndarray
    l1_weight: float
    l1_mask: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    prox_tau: Optional[float] = None
    prox_center: Optional[np.ndarray] = None

    def __post_init__(self):
        K = require_finite(self.K, "K")
        if K.ndim != 2:
            raise ValueError("K must be a matrix")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "target", require_finite(self.target, "target"))
        object.__setattr__(self, "lo", require_finite(self.lo, "lo"))
        object.__setattr__(self, "hi", require_finite(self.hi, "hi"))
        mask = np.asarray(self.l1_mask, dtype=bool)
        object.__setattr__(self, "l1_mask", mask)
        m, n = K.shape
        if self.target.shape != (m,):
            raise ValueError("target length must match the rows of K")
        if not (mask.shape == (n,) and self.lo.shape == (n,) and self.hi.shape == (n,)):
            raise ValueError("mask and box bounds must match the columns of K")
        if np.any(self.lo > self.hi):
            raise ValueError("box is empty: lo > hi somewhere")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be non-negative")
        if (self.prox_tau is None) != (self.prox_center is None):
            raise ValueError("prox_tau and prox_center must be given together")
        if self.prox_tau is not None:
            if not self.prox_tau > 0:
                raise ValueError("prox_tau must be positive")
            center = require_finite(self.prox_center, "prox_center")
            if center.shape != (n,):
                raise ValueError("prox_center must match the columns of K")
            object.__setattr__(self, "prox_center", center)

    @property
    def m(self):
        return self.K.shape[0]

    @property
    def n(self):
        return self.K.shape[1]

    def penalty_weights(self):
        return np.where(self.l1_mask, self.l1_weight, 0.0)

    def objective(self, u):
        u = np.asarray(u, dtype=float)
        val = float(np.abs(self.K @ u - self.target).sum())
        val += self.l1_weight * float(np.abs(u[self.l1_mask]).sum())
        if self.prox_tau is not None:
            d = u - self.prox_center
            val += float(d @ d) / (2.0 * self.prox_tau)
        return val

    def objective_batch(self, U):
        """Objective at each row of U, vectorized (used by the grid oracle)."""
        U = np.asarray(U, dtype=float)
        vals = np.abs(U @ self.K.T - self.target).sum(axis=1)
        vals = vals + self.l1_weight * np.abs(U[:, self.l1_mask]).sum(axis=1)
        if self.prox_tau is not None:
            D = U - self.prox_center
            vals = vals + (D * D).sum(axis=1) / (2.0 * self.prox_tau)
        return vals

    def with_prox(self, tau, center):
        return replace(self, prox_tau=float(tau), prox_center=np.asarray(center, float))

    def without_prox(self):
        return replace(self, prox_tau=None, prox_center=None)


@dataclass
class PdState:
    """Warm-startable primal-dual state of one subproblem solve."""

    u: np.ndarray
    p: np.ndarray
    u_bar: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray
    iterations: int = 0


@dataclass
class PdhgResult:
    u: np.ndarray
    state: PdState
    gap: float
    iterations: int
    converged: bool


def precond_steps(K, beta=1.0):
    """Diagonal dual/primal step sizes from the entries of K.

    sigma_i = 1 / sum_j |K_ij|^(2-beta) and theta_j = 1 / sum_i |K_ij|^beta,
    with the convention that an all-zero row or column gets step 1. These
    steps satisfy || diag(sigma)^(1/2) K diag(theta)^(1/2) || <= 1.
    """
    if not 0.0 <= beta <= 2.0:
        raise ValueError("beta must lie in [0, 2]")
    A = np.abs(np.asarray(K, dtype=float))
    row = (A ** (2.0 - beta)).sum(axis=1)
    col = (A**beta).sum(axis=0)
    sigma = 1.0 / np.where(row > 0, row, 1.0)
    theta = 1.0 / np.where(col > 0, col, 1.0)
    return sigma, theta


def _soft(z, level):
    return np.sign(z) * np.maximum(np.abs(z) - level, 0.0)


def _conjugate_box_l1(problem, v):
    """sup_{lo<=u<=hi} <v, u> - w|u| [- (u-center)^2/(2 tau)], coordinate-wise.

    Closed form: without the proximal term the supremum of a piecewise linear
    function sits at {lo, 0, hi}; with it, each sign branch is a concave
    parabola whose clamped vertex is optimal.
    """
    lo, hi = problem.lo, problem.hi
    w = problem.penalty_weights()
    if problem.prox_tau is None:
        vals = np.maximum(v * lo - w * np.abs(lo), v * hi - w * np.abs(hi))
        inside = (lo <= 0.0) & (hi >= 0.0)
        vals = np.where(inside, np.maximum(vals, 0.0), vals)
        return float(vals.sum())
    tau, c = problem.prox_tau, problem.prox_center

    def branch_value(vertex, blo, bhi):
        u = np.clip(vertex, blo, bhi)
        val = v * u - w * np.abs(u) - (u - c) ** 2 / (2.0 * tau)
        return np.where(blo <= bhi, val, -np.inf)

    pos = branch_value(c + tau * (v - w), np.maximum(lo, 0.0), hi)
    neg = branch_value(c + tau * (v + w), lo, np.minimum(hi, 0.0))
    return float(np.maximum(pos, neg).sum())


def primal_dual_gap(problem, u, p):
    """Fenchel duality gap at primal u (in the box) and dual p (clipped).

    Non-negative up to rounding and an upper bound on the suboptimality of u,
    hence a sound certificate for approximate subproblem solves.
    """
    primal = problem.objective(u)
    dual = -float(p @ problem.target) - _conjugate_box_l1(problem, -(problem.K.T @ p))
    return primal - dual


def pdhg_solve(
    problem,
    warm=None,
    gap_tol=1e-8,
    max_iters=20000,
    check_every=25,
    beta=1.0,
    callback=None,
):
    """Solve one subproblem by preconditioned primal-dual iterations.

    Dual ascent step then clip to [-1, 1]; primal step by soft-thresholding
    the penalized coordinates and clamping to the box (exact coordinate-wise
    proximal step, since the 1-D objective is convex); primal extrapolation
    by a factor of two. Stops when the duality gap drops below ``gap_tol``
    (checked every ``check_every`` iterations) or at the iteration cap, in
    which case the achieved gap is reported and ``converged`` is False.

    A dimensionally consistent ``warm`` state seeds the primal and dual
    points; anything else is ignored.
    """
    K, target, lo, hi = problem.K, problem.target, problem.lo, problem.hi
    m, n = K.shape
    sigma, theta = precond_steps(K, beta)
    if (
        warm is not None
        and getattr(warm, "u", None) is not None
        and np.shape(warm.u) == (n,)
        and np.shape(warm.p) == (m,)
    ):
        u = np.clip(np.asarray(warm.u, float), lo, hi)
        p = np.clip(np.asarray(warm.p, float), -1.0, 1.0)
    else:
        u = np.clip(np.zeros(n), lo, hi)
        p = np.zeros(m)
    u_bar = u.copy()

    if problem.prox_tau is not None:
        tau = problem.prox_tau
        blend = tau / (tau + theta)  # effective step theta*blend, center mix 1-blend
        theta_eff = theta * blend
        center_term = (1.0 - blend) * problem.prox_center
    else:
        blend = None
        theta_eff = theta
    level = theta_eff * problem.penalty_weights()

    gap = primal_dual_gap(problem, u, p)
    it = 0
    while gap > gap_tol and it < max_iters:
        p = np.clip(p + sigma * (K @ u_bar - target), -1.0, 1.0)
        z = u - theta * (K.T @ p)
        if blend is not None:
            z = blend * z + center_term
        u_new = np.clip(_soft(z, level), lo, hi)
        u_bar = 2.0 * u_new - u
        u = u_new
        it += 1
        if callback is not None:
            callback(u, p)
        if it % check_every == 0 or it == max_iters:
            gap = primal_dual_gap(problem, u, p)

    state = PdState(u=u, p=p, u_bar=u_bar, sigma=sigma, theta=theta, iterations=it)
    return PdhgResult(u=u, state=state, gap=gap, iterations=it, converged=gap <= gap_tol)


# ---------------------------------------------------------------------------
# brute-force oracle for small instances
# ---------------------------------------------------------------------------


def _line_min(problem, u, d):
    """Exact minimum of the objective along u + t d within the box.

    Candidates: the segment ends, every kink of the piecewise-linear part
    (data rows and penalized coordinates crossing zero), and, with a proximal
    term, the parabola vertex of each smooth piece between consecutive kinks.
    Returns the best point and its value.
    """
    lo, hi = problem.lo, problem.hi
    d = np.asarray(d, dtype=float)
    nz = d != 0
    if not np.any(nz):
        return u, problem.objective(u)
    with np.errstate(divide="ignore"):
        t1 = (lo[nz] - u[nz]) / d[nz]
        t2 = (hi[nz] - u[nz]) / d[nz]
    tmin = float(np.minimum(t1, t2).max())
    tmax = float(np.maximum(t1, t2).min())
    if tmin > tmax:
        return u, problem.objective(u)

    r = problem.target - problem.K @ u
    kd = problem.K @ d
    cands = [tmin, tmax]
    knz = kd != 0
    cands.extend((r[knz] / kd[knz]).tolist())
    w = problem.penalty_weights()
    pen = (w > 0) & nz
    cands.extend((-u[pen] / d[pen]).tolist())
    cands = np.clip(np.asarray(cands, dtype=float), tmin, tmax)
    if problem.prox_tau is not None:
        # the piecewise slope is constant between kinks; solve
        # slope + d.(u + t d - center)/tau = 0 from each piece's midpoint
        tau = problem.prox_tau
        dd = float(d @ d)
        off = float(d @ (problem.prox_center - u))
        pts = np.unique(cands)
        mids = np.concatenate([pts, 0.5 * (pts[1:] + pts[:-1])]) if pts.size > 1 else pts
        extra = []
        for t in mids:
            slope = float(kd @ np.sign(kd * t - r)) + float(
                (w * d) @ np.sign(u + t * d)
            )
            extra.append((off - tau * slope) / dd)
        cands = np.concatenate([cands, np.clip(extra, tmin, tmax)])

    cands = np.unique(cands)
    U = u[None, :] + cands[:, None] * d[None, :]
    U = np.clip(U, lo, hi)  # guard rounding at the segment ends
    vals = problem.objective_batch(U)
    i = int(np.argmin(vals))
    return U[i], float(vals[i])


def _kink_vertex_min(problem):
    """Exact minimizer of the piecewise-linear (no proximal term) objective.

    A convex piecewise-linear function attains its minimum over the box at a
    point where n independent hyperplanes from {data kinks, penalty kinks,
    box faces} intersect; all such intersections are enumerated.
    """
    n = problem.n
    normals, offsets = [], []
    for i in range(problem.m):
        row = problem.K[i]
        if np.any(row != 0):
            normals.append(row)
            offsets.append(problem.target[i])
    eye = np.eye(n)
    for j in range(n):
        if problem.l1_mask[j] and problem.l1_weight > 0:
            normals.append(eye[j])
            offsets.append(0.0)
        normals.append(eye[j])
        offsets.append(problem.lo[j])
        normals.append(eye[j])
        offsets.append(problem.hi[j])
    normals = np.asarray(normals)
    offsets = np.asarray(offsets)
    if len(normals) > 48:
        raise ValueError("too many kink hyperplanes for exact enumeration")

    combos = np.array(list(combinations(range(len(normals)), n)))
    A = normals[combos]  # (n_combos, n, n)
    b = offsets[combos]
    dets = np.abs(np.linalg.det(A))
    row_scale = np.prod(np.linalg.norm(A, axis=2), axis=1)
    ok = dets > 1e-12 * np.maximum(row_scale, 1e-30)
    pts = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    pad = 1e-9 * (1.0 + np.maximum(np.abs(problem.lo), np.abs(problem.hi)))
    feas = np.all(pts >= problem.lo - pad, axis=1) & np.all(pts <= problem.hi + pad, axis=1)
    pts = np.clip(pts[feas], problem.lo, problem.hi)
    pts = np.vstack([pts, problem.lo, problem.hi, np.clip(np.zeros(n), problem.lo, problem.hi)])
    vals = problem.objective_batch(pts)
    i = int(np.argmin(vals))
    return pts[i], float(vals[i])


def brute_force_subproblem(problem, resolution=9, max_stages=24, seed=0):
    """Ground-truth solve of a small subproblem (n <= 4). Returns (u, value).

    Without a proximal term the minimum is found exactly by enumerating kink
    hyperplane intersections. With one (strongly convex case), a
    multi-resolution grid localizes the minimum and exact line minimization
    along coordinates and seeded random directions polishes it; plain
    coordinate descent alone can stall on the coupled non-smooth part, which
    is why the direction sweep is included.
    """
    n = problem.n
    if n > 4:
        raise ValueError("brute force oracle is limited to 4 variables")
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    if problem.prox_tau is None:
        return _kink_vertex_min(problem)

    lo, hi = problem.lo, problem.hi
    wlo, whi = lo.copy(), hi.copy()
    best_u, best_val = None, np.inf
    for _ in range(max_stages):
        axes = [np.linspace(wlo[j], whi[j], resolution) for j in range(n)]
        grid = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grid], axis=1)
        vals = problem.objective_batch(pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_u = pts[i].copy()
        span = (whi - wlo) / (resolution - 1)
        if float(span.max()) <= 1e-10 * (1.0 + float(np.abs(best_u).max())):
            break
        wlo = np.maximum(best_u - 1.5 * span, lo)
        whi = np.minimum(best_u + 1.5 * span, hi)

    u, val = best_u, best_val
    rng = np.random.default_rng(seed)
    stall = 0
    for _ in range(4000):
        improved = False
        for d in _polish_directions(problem, u, rng):
            u_new, v_new = _line_min(problem, u, d)
            if v_new < val - 1e-14 * (1.0 + abs(val)):
                u, val = u_new, v_new
                improved = True
        stall = 0 if improved else stall + 1
        if stall >= 30:
            break
    return u, val


def _polish_directions(problem, u, rng):
    """Directions for the polish sweep: coordinates, the null space of the
    currently active kink hyperplanes (progress along the valleys where
    coordinate moves stall), and a few random directions."""
    n = problem.n
    dirs = [np.eye(n)]
    scale = 1.0 + float(np.abs(problem.target).max(initial=0.0))
    act = np.abs(problem.K @ u - problem.target) <= 1e-9 * scale
    normals = [problem.K[act]] if np.any(act) else []
    w = problem.penalty_weights()
    pen_act = (w > 0) & (np.abs(u) <= 1e-12 * (1.0 + np.abs(u).max()))
    if np.any(pen_act):
        normals.append(np.eye(n)[pen_act])
    if normals:
        N = np.vstack(normals)
        _, s, Vt = np.linalg.svd(N)
        rank = int((s > 1e-10 * max(s[0], 1e-30)).sum())
        if rank < n:
            dirs.append(Vt[rank:])
    dirs.append(rng.standard_normal((n, n)))
    return np.vstack(dirs)
