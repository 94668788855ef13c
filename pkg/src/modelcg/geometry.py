"""Convex geometry layer: growth functions, compact constraint sets with linear
minimization oracles and Euclidean projections, and the PSD matrix projection.

All sets live on flat float vectors. Matrix-shaped sets (nuclear norm ball)
store their shape and reshape internally, row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PowerGrowth",
    "ConstraintSet",
    "Box",
    "Simplex",
    "L1Ball",
    "L2Ball",
    "NuclearBall",
    "ProductSet",
    "PowerIterationError",
    "lmo_box",
    "lmo_simplex",
    "lmo_l1_ball",
    "lmo_l2_ball",
    "lmo_nuclear_ball",
    "top_singular_pair",
    "project_box",
    "project_simplex",
    "project_l1_ball",
    "psd_projection",
    "require_finite",
]


def require_finite(arr, name="array"):
    """Return ``arr`` as a float ndarray, rejecting NaN/Inf entries."""
    a = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class PowerGrowth:
    """Power-type error growth w(t) = c/(1+alpha) * t**(1+alpha).

    Continuous, w(0) = 0, and w(t)/t -> 0 as t -> 0, which is what makes it a
    valid bound on the first-order approximation error of a model. ``alpha``
    is restricted to (0, 1] (alpha = 1 is the Lipschitz-gradient case with
    c the gradient's Lipschitz constant).
    """

    coefficient: float
    exponent: float = 1.0

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValueError("coefficient must be positive")
        if not 0.0 < self.exponent <= 1.0:
            raise ValueError("exponent must lie in (0, 1]")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("growth functions are defined on t >= 0")
        value = self.coefficient / (1.0 + self.exponent) * t ** (1.0 + self.exponent)
        return float(value) if value.ndim == 0 else value


# ---------------------------------------------------------------------------
# linear minimization oracles and projections (functional layer)
# ---------------------------------------------------------------------------


def lmo_box(c, lo, hi):
    """argmin <c, x> over the box [lo, hi]; zero coefficients pick lo."""
    c = require_finite(c, "c")
    lo = require_finite(lo, "lo")
    hi = require_finite(hi, "hi")
    if c.shape != lo.shape or lo.shape != hi.shape:
        raise ValueError("dimension mismatch between c and the box bounds")
    if np.any(lo > hi):
        raise ValueError("box is empty: lo > hi somewhere")
    return np.where(c < 0, hi, lo)


def lmo_simplex(c):
    """argmin <c, x> over the unit simplex: the vertex of the smallest
    coefficient, lowest index on ties."""
    c = require_finite(c, "c")
    if c.size == 0:
        raise ValueError("empty cost vector")
    out = np.zeros_like(c)
    out[int(np.argmin(c))] = 1.0
    return out


def lmo_l1_ball(c, radius):
    """argmin <c, x> over the l1 ball: a signed scaled basis vector at the
    largest-magnitude coefficient (lowest index on ties); origin if c = 0."""
    c = require_finite(c, "c")
    if not radius > 0:
        raise ValueError("radius must be positive")
    out = np.zeros_like(c)
    i = int(np.argmax(np.abs(c)))
    if c[i] != 0.0:
        out[i] = -radius * np.sign(c[i])
    return out


def lmo_l2_ball(c, radius, mean_zero=False):
    """argmin <c, x> over the l2 ball (optionally intersected with the
    mean-zero hyperplane): -radius * c~ / ||c~||, origin if c~ = 0."""
    c = require_finite(c, "c")
    if not radius > 0:
        raise ValueError("radius must be positive")
    ct = c - c.mean() if mean_zero else c
    nrm = float(np.linalg.norm(ct))
    if nrm == 0.0:
        return np.zeros_like(c)
    return (-radius / nrm) * ct


class PowerIterationError(RuntimeError):
    """Power iteration did not reach the requested residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")
        self.residual = residual


def top_singular_pair(G, tol=1e-9, max_iters=1000, seed=0):
    """Dominant singular triple (u, s, v) of G via power iteration on G^T G.

    Starts from the normalized all-ones vector and restarts from a seeded
    random vector if the Rayleigh quotient stagnates at zero. Convergence is
    declared when ``||G^T G v - lam v|| <= tol * lam``; otherwise a
    :class:`PowerIterationError` reports the achieved residual.
    """
    G = require_finite(G, "G")
    if G.ndim != 2:
        raise ValueError("G must be a matrix")
    scale = float(np.max(np.abs(G)))
    if scale == 0.0:
        raise ValueError("zero matrix has no dominant singular pair")
    n = G.shape[1]
    v = np.ones(n) / math.sqrt(n)
    rng = np.random.default_rng(seed)
    restarted = False
    residual = np.inf
    for _ in range(max_iters):
        z = G.T @ (G @ v)
        lam = float(v @ z)
        nz = float(np.linalg.norm(z))
        if nz <= 1e-30 * scale * scale or lam <= 0.0:
            if restarted:
                raise PowerIterationError("power iteration stagnated", np.inf)
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            restarted = True
            continue
        residual = float(np.linalg.norm(z - lam * v)) / lam
        v = z / nz
        if residual <= tol:
            break
    else:
        raise PowerIterationError("power iteration did not converge", residual)
    Gv = G @ v
    s = float(np.linalg.norm(Gv))
    u = Gv / s
    return u, s, v


def lmo_nuclear_ball(G, radius, tol=1e-9, max_iters=1000, seed=0):
    """argmin <G, X> over the nuclear norm ball of the given radius.

    Returns the rank-one matrix -radius * u v^T built from the dominant
    singular pair of G. The zero matrix is rejected as degenerate.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    u, _, v = top_singular_pair(G, tol=tol, max_iters=max_iters, seed=seed)
    return -radius * np.outer(u, v)


def project_box(x, lo, hi):
    """Euclidean projection onto the box [lo, hi]: coordinate-wise clamp."""
    x = require_finite(x, "x")
    lo = require_finite(lo, "lo")
    hi = require_finite(hi, "hi")
    if np.any(lo > hi):
        raise ValueError("box is empty: lo > hi somewhere")
    return np.clip(x, lo, hi)


def _simplex_threshold(v, radius):
    # Shift for projecting v onto {x >= 0, sum x = radius} by sort-and-threshold.
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u * idx > css)[0][-1])
    return css[rho] / (rho + 1.0)


def project_simplex(x):
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    x = require_finite(x, "x")
    if x.size == 0:
        raise ValueError("empty vector")
    return np.maximum(x - _simplex_threshold(x, 1.0), 0.0)


def project_l1_ball(x, radius):
    """Euclidean projection onto the l1 ball of the given radius."""
    x = require_finite(x, "x")
    if not radius > 0:
        raise ValueError("radius must be positive")
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    w = np.maximum(a - _simplex_threshold(a, radius), 0.0)
    return np.sign(x) * w


def psd_projection(H, sym_tol=1e-10):
    """Frobenius-nearest positive semi-definite matrix to a symmetric H.

    H is symmetrized internally; asymmetry beyond ``sym_tol`` (relative to the
    largest entry) is rejected. Negative eigenvalues are clipped to zero.
    """
    H = require_finite(H, "H")
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    scale = 1.0 + float(np.max(np.abs(H))) if H.size else 1.0
    if float(np.max(np.abs(H - H.T), initial=0.0)) > sym_tol * scale:
        raise ValueError("H is not symmetric within tolerance")
    S = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(S)  # LinAlgError surfaces to the caller
    P = (V * np.clip(w, 0.0, None)) @ V.T
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------


class ConstraintSet:
    """A non-empty compact convex set on flat vectors.

    Exposes membership, a finite diameter upper bound, a linear minimization
    oracle, Euclidean projection, and feasible-point sampling. All methods are
    pure functions of their inputs.
    """

    dim: int

    def contains(self, x, tol=1e-9):
        raise NotImplementedError

    def diameter(self):
        raise NotImplementedError

    def lmo(self, c):
        """A minimizer of <c, x> over the set."""
        raise NotImplementedError

    def project(self, x):
        raise NotImplementedError

    def sample(self, rng):
        """A feasible point; distribution unspecified but covers the set."""
        raise NotImplementedError


class Box(ConstraintSet):
    """Axis-aligned box [lo, hi]."""

    def __init__(self, lo, hi):
        self.lo = require_finite(lo, "lo")
        self.hi = require_finite(hi, "hi")
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D of equal length")
        if np.any(self.lo > self.hi):
            raise ValueError("box is empty: lo > hi somewhere")
        self.dim = self.lo.size

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        pad = tol * (1.0 + np.maximum(np.abs(self.lo), np.abs(self.hi)))
        return bool(np.all(x >= self.lo - pad) and np.all(x <= self.hi + pad))

    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def lmo(self, c):
        return lmo_box(c, self.lo, self.hi)

    def project(self, x):
        return project_box(x, self.lo, self.hi)

    def sample(self, rng):
        return self.lo + rng.random(self.dim) * (self.hi - self.lo)

    def midpoint(self):
        return 0.5 * (self.lo + self.hi)


class Simplex(ConstraintSet):
    """The unit simplex {x >= 0, sum(x) = 1}."""

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(float(x.sum()) - 1.0) <= tol * self.dim)

    def diameter(self):
        return math.sqrt(2.0) if self.dim > 1 else 0.0

    def lmo(self, c):
        return lmo_simplex(c)

    def project(self, x):
        return project_simplex(x)

    def sample(self, rng):
        e = rng.exponential(size=self.dim)
        return e / e.sum()


class L1Ball(ConstraintSet):
    """l1 norm ball of a given radius."""

    def __init__(self, dim, radius):
        if dim < 1:
            raise ValueError("dimension must be positive")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)

    def contains(self, x, tol=1e-9):
        return float(np.abs(x).sum()) <= self.radius + tol * (1.0 + self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def lmo(self, c):
        return lmo_l1_ball(c, self.radius)

    def project(self, x):
        return project_l1_ball(x, self.radius)

    def sample(self, rng):
        g = rng.standard_normal(self.dim)
        return (self.radius * rng.random()) * g / np.abs(g).sum()


class L2Ball(ConstraintSet):
    """l2 norm ball, optionally intersected with the mean-zero hyperplane."""

    def __init__(self, dim, radius, mean_zero=False):
        if dim < 1:
            raise ValueError("dimension must be positive")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)
        self.mean_zero = bool(mean_zero)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        pad = tol * (1.0 + self.radius)
        if self.mean_zero and abs(float(x.mean())) > pad:
            return False
        return float(np.linalg.norm(x)) <= self.radius + pad

    def diameter(self):
        return 2.0 * self.radius

    def lmo(self, c):
        return lmo_l2_ball(c, self.radius, mean_zero=self.mean_zero)

    def project(self, x):
        y = np.asarray(x, dtype=float)
        if self.mean_zero:
            y = y - y.mean()
        nrm = float(np.linalg.norm(y))
        if nrm > self.radius:
            y = y * (self.radius / nrm)
        return y

    def sample(self, rng):
        g = rng.standard_normal(self.dim)
        if self.mean_zero:
            g = g - g.mean()
        nrm = float(np.linalg.norm(g))
        if nrm == 0.0:
            return np.zeros(self.dim)
        free = self.dim - 1 if self.mean_zero else self.dim
        r = self.radius * rng.random() ** (1.0 / max(free, 1))
        return (r / nrm) * g


class NuclearBall(ConstraintSet):
    """Nuclear norm ball over rows x cols matrices, flattened row-major.

    The oracle returns a rank-one extreme point from the dominant singular
    pair of the (reshaped) cost; a zero cost yields the origin, which is
    optimal for any feasible point.
    """

    def __init__(self, rows, cols, radius, power_tol=1e-9, power_max_iters=1000):
        if rows < 1 or cols < 1:
            raise ValueError("matrix shape must be positive")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.rows = int(rows)
        self.cols = int(cols)
        self.radius = float(radius)
        self.power_tol = float(power_tol)
        self.power_max_iters = int(power_max_iters)
        self.dim = self.rows * self.cols

    def _mat(self, x):
        return np.asarray(x, dtype=float).reshape(self.rows, self.cols)

    def contains(self, x, tol=1e-9):
        s = np.linalg.svd(self._mat(x), compute_uv=False)
        return float(s.sum()) <= self.radius + tol * (1.0 + self.radius)

    def diameter(self):
        # nuclear norm dominates Frobenius, so 2r bounds Euclidean distances
        return 2.0 * self.radius

    def lmo(self, c):
        G = self._mat(c)
        if float(np.max(np.abs(G))) == 0.0:
            return np.zeros(self.dim)
        out = lmo_nuclear_ball(
            G, self.radius, tol=self.power_tol, max_iters=self.power_max_iters
        )
        return out.ravel()

    def project(self, x):
        U, s, Vt = np.linalg.svd(self._mat(x), full_matrices=False)
        if s.sum() > self.radius:
            s = np.maximum(s - _simplex_threshold(s, self.radius), 0.0)
        return ((U * s) @ Vt).ravel()

    def sample(self, rng):
        G = rng.standard_normal((self.rows, self.cols))
        return self.project(G.ravel())


class ProductSet(ConstraintSet):
    """Cartesian product of sets acting on consecutive vector blocks."""

    def __init__(self, sets):
        self.sets = tuple(sets)
        if not self.sets:
            raise ValueError("product of zero sets")
        dims = [s.dim for s in self.sets]
        self.offsets = np.concatenate([[0], np.cumsum(dims)])
        self.dim = int(self.offsets[-1])

    def blocks(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError("block dimensions do not sum to the vector length")
        return [x[self.offsets[i] : self.offsets[i + 1]] for i in range(len(self.sets))]

    def contains(self, x, tol=1e-9):
        return all(s.contains(b, tol) for s, b in zip(self.sets, self.blocks(x)))

    def diameter(self):
        return math.sqrt(sum(s.diameter() ** 2 for s in self.sets))

    def lmo(self, c):
        return np.concatenate([s.lmo(b) for s, b in zip(self.sets, self.blocks(c))])

    def project(self, x):
        return np.concatenate([s.project(b) for s, b in zip(self.sets, self.blocks(x))])

    def sample(self, rng):
        return np.concatenate([s.sample(rng) for s in self.sets])
