"""Proximity operators for the nonsmooth terms and a brute-force 1-D oracle.

All operators follow ``prox(z, alpha) = argmin_u r(u) + |u - z|^2 / (2 alpha)``.
Vector-valued ``evaluate`` methods reduce over the last axis, so a column of
candidate points ``U[:, None]`` evaluates to one value per row.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateConstraint, RangeTooNarrow

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------- closed forms


def prox_l1(z, tau):
    """Soft shrinkage: ``sign(z) * max(|z| - tau, 0)``."""
    return _kernels.soft_threshold(z, tau)


def prox_l0(z, tau):
    """Hard threshold at ``sqrt(2 tau)``; ties go to zero."""
    return _kernels.hard_threshold(z, tau)


def prox_lq(z, tau, q):
    """Componentwise ``argmin_u tau |u|^q + (u - z)^2 / 2`` for ``q`` in {1/2, 2/3}."""
    if abs(q - 0.5) < 1e-12:
        return _kernels.half_threshold(z, tau)
    if abs(q - 2.0 / 3.0) < 1e-9:
        return _kernels.two_thirds_threshold(z, tau)
    raise ValueError(f"no closed-form thresholding for q={q}")


def prox_geometric_median(u, b, alpha):
    """Prox of ``alpha * |x - b|_2``: shrink ``u`` toward the anchor ``b``."""
    u = np.asarray(u, dtype=np.float64)
    diff = np.asarray(b, dtype=np.float64) - u
    dist = np.linalg.norm(diff)
    if dist == 0.0:
        return np.array(b, dtype=np.float64, copy=True)
    return b - diff / dist * max(dist - alpha, 0.0)


def prox_halfspace(u, a, b):
    """Euclidean projection of ``u`` onto ``{x : a.x <= b}``."""
    u = np.asarray(u, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    nrm2 = float(a @ a)
    if math.sqrt(nrm2) < 1e-14:
        raise DegenerateConstraint("halfspace normal has (near) zero norm")
    gap = float(a @ u) - b
    if gap <= 0.0:
        return u.copy()
    return u - gap * a / nrm2


# ---------------------------------------------------------------- operator objects


class ProxOp:
    """A nonsmooth term with its prox map and a subgradient selection."""

    name = "base"
    convex = True
    bounded_subgradient = True

    def evaluate(self, x):
        raise NotImplementedError

    def prox(self, z, alpha):
        raise NotImplementedError

    def subgradient(self, x):
        raise NotImplementedError

    def subgradient_bound(self, p):
        """Uniform bound on the selected subgradient in dimension ``p`` (None if unbounded)."""
        return None


@dataclass(frozen=True)
class ZeroOp(ProxOp):
    name = "zero"

    def evaluate(self, x):
        return np.zeros(np.shape(x)[:-1])

    def prox(self, z, alpha):
        return np.array(z, dtype=np.float64, copy=True)

    def subgradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def subgradient_bound(self, p):
        return 0.0


@dataclass(frozen=True)
class L1Op(ProxOp):
    lam: float
    name = "l1"

    def evaluate(self, x):
        return self.lam * np.sum(np.abs(x), axis=-1)

    def prox(self, z, alpha):
        return prox_l1(z, alpha * self.lam)

    def subgradient(self, x):
        # minimal-norm element at 0
        return self.lam * np.sign(x)

    def subgradient_bound(self, p):
        return self.lam * math.sqrt(p)


@dataclass(frozen=True)
class L0Op(ProxOp):
    lam: float
    name = "l0"
    convex = False
    bounded_subgradient = False

    def evaluate(self, x):
        return self.lam * np.count_nonzero(np.asarray(x), axis=-1).astype(np.float64)

    def prox(self, z, alpha):
        return prox_l0(z, alpha * self.lam)

    def subgradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class LqOp(ProxOp):
    lam: float
    q: float
    name = "lq"
    convex = False
    bounded_subgradient = False

    def evaluate(self, x):
        return self.lam * np.sum(np.abs(x) ** self.q, axis=-1)

    def prox(self, z, alpha):
        return prox_lq(z, alpha * self.lam, self.q)

    def subgradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        nz = x != 0
        out[nz] = self.lam * self.q * np.sign(x[nz]) * np.abs(x[nz]) ** (self.q - 1.0)
        return out


@dataclass(frozen=True, eq=False)
class GeometricMedianOp(ProxOp):
    anchor: np.ndarray
    name = "geometric_median"

    def evaluate(self, x):
        return np.linalg.norm(np.asarray(x) - self.anchor, axis=-1)

    def prox(self, z, alpha):
        return prox_geometric_median(z, self.anchor, alpha)

    def subgradient(self, x):
        diff = np.asarray(x, dtype=np.float64) - self.anchor
        dist = np.linalg.norm(diff)
        return diff / dist if dist > 0 else np.zeros_like(diff)

    def subgradient_bound(self, p):
        return 1.0


@dataclass(frozen=True, eq=False)
class HalfspaceOp(ProxOp):
    """Indicator of ``{x : a.x <= b}``."""

    a: np.ndarray
    b: float
    name = "halfspace"
    bounded_subgradient = False

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        val = x @ self.a - self.b
        # membership up to rounding in a.x, which scales with |a| |x|
        slack = 1e-12 * (max(1.0, abs(self.b)) + np.linalg.norm(self.a) * np.linalg.norm(x, axis=-1))
        return np.where(val <= slack, 0.0, np.inf)

    def prox(self, z, alpha):
        return prox_halfspace(z, self.a, self.b)

    def subgradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


def prox_scaled(op, z, alpha, w):
    """Prox of ``w * r(. / w)`` with parameter ``alpha``, via ``w * prox_{(alpha/w) r}(z / w)``."""
    if w <= 0:
        raise ValueError("push-sum weight must be positive")
    if isinstance(op, ZeroOp):
        return np.array(z, dtype=np.float64, copy=True)
    return w * op.prox(np.asarray(z, dtype=np.float64) / w, alpha / w)


# ---------------------------------------------------------------- oracle


def golden_min(f, lo, hi, tol=1e-12, max_iter=200):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def oracle_prox_1d(r, z, alpha, lo, hi, step=1e-3):
    """Grid-and-refine minimizer of ``r(u) + (u - z)^2 / (2 alpha)`` over ``[lo, hi]``.

    ``r`` must accept a 1-D array of candidates. The grid always contains
    ``0`` and ``z`` so kinks and jumps at those points are seen exactly.
    """
    if not lo < z < hi:
        raise ValueError("need lo < z < hi")
    if step <= 0:
        raise ValueError("step must be positive")

    def obj(u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        return np.asarray(r(u), dtype=np.float64) + (u - z) ** 2 / (2.0 * alpha)

    grid = np.arange(lo, hi + 0.5 * step, step)
    extra = [v for v in (0.0, z) if lo <= v <= hi]
    grid = np.concatenate([grid, extra])
    vals = obj(grid)
    k = int(np.argmin(vals))
    best_u, best_f = float(grid[k]), float(vals[k])
    if best_u - lo < 0.5 * step or hi - best_u < 0.5 * step:
        raise RangeTooNarrow(f"minimizer {best_u} sits on the search boundary [{lo}, {hi}]")
    u_ref, f_ref = golden_min(
        lambda u: float(obj(u)[0]), max(lo, best_u - step), min(hi, best_u + step)
    )
    if f_ref < best_f:
        return u_ref
    return best_u
