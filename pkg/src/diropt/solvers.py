"""Synchronous-round simulation of PG-ExtraPush, its reductions and Subgradient-Push.

Iterates are ``n x p`` matrices whose row ``i`` is agent ``i``'s local copy.
Each algorithm step follows its matrix-form update literally; no update is
rewritten through an algebraically equivalent recursion.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, NonFiniteIterate
from .graph import check_positive_definiteness
from .prox import prox_scaled

ALGORITHMS = ("pg_extrapush", "extrapush", "p_extrapush", "pg_extra", "subgradient_push")
EXTRA_FAMILY = ("pg_extrapush", "extrapush", "p_extrapush", "pg_extra")
DIVERGENCE_LIMIT = 1e12


@dataclass
class RunConfig:
    algorithm: str = "pg_extrapush"
    alpha: float = 0.01
    alpha_schedule: object = None
    max_iter: int = 1000
    record_every: int = 1
    z0: np.ndarray = None
    reference: np.ndarray = None
    lyapunov: object = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def step_size(self, t):
        """Step used in round ``t`` (constant unless a schedule is set)."""
        sched = self.alpha_schedule
        if sched is None or sched == "constant":
            return self.alpha
        if sched == "sqrt":
            return self.alpha / math.sqrt(max(t, 1))
        return float(sched(t))


@dataclass(eq=False)
class SolverState:
    """Iterates of one run after round ``t``.

    ``grad`` caches the smooth gradient at ``x`` and ``grad_prev`` the one at
    ``x_prev``; ``y`` and ``u`` accumulate ``(Abar - A) z^k`` and ``z^k``.
    """

    t: int
    z: np.ndarray
    z_half: np.ndarray
    z_prev: np.ndarray
    z_half_prev: np.ndarray
    w: np.ndarray
    x: np.ndarray
    x_prev: np.ndarray
    grad: np.ndarray
    grad_prev: np.ndarray
    y: np.ndarray
    u: np.ndarray

    def copy(self):
        return replace(
            self,
            **{
                k: (None if getattr(self, k) is None else getattr(self, k).copy())
                for k in ("z", "z_half", "z_prev", "z_half_prev", "w", "x", "x_prev",
                          "grad", "grad_prev", "y", "u")
            },
        )


@dataclass
class TraceRecord:
    t: int
    dist_to_ref: float
    consensus_error: float
    optimality_residual: float
    objective: float
    lyapunov: float = float("nan")


# ---------------------------------------------------------------- helpers


def _prox_rows(inst, Z, alpha, w):
    out = np.empty_like(Z)
    for i, agent in enumerate(inst.agents):
        out[i] = prox_scaled(agent.prox, Z[i], alpha, w[i])
    return out


def _check_finite(state):
    for arr in (state.z, state.x):
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > DIVERGENCE_LIMIT:
            raise NonFiniteIterate(f"iterates diverged at round {state.t}", t=state.t)
    return state


def _grad(inst, X, algorithm):
    if algorithm == "p_extrapush":
        return np.zeros_like(X)
    return inst.grad(X)


def _subgradients(inst, X):
    return np.stack([a.prox.subgradient(X[i]) for i, a in enumerate(inst.agents)])


# ---------------------------------------------------------------- init


def init(inst, mix, cfg):
    """Build the state after the first round from ``z^0`` and ``w^0 = 1``."""
    n, p = inst.n, inst.p
    if mix.n != n:
        raise DimensionMismatch(f"mixing matrix has {mix.n} nodes, instance has {n} agents")
    z0 = np.zeros((n, p)) if cfg.z0 is None else np.array(cfg.z0, dtype=np.float64)
    if z0.shape != (n, p):
        raise DimensionMismatch(f"z0 has shape {z0.shape}, expected {(n, p)}")
    if cfg.algorithm in EXTRA_FAMILY and cfg.algorithm != "pg_extra" and not check_positive_definiteness(mix):
        warnings.warn("mixing matrix fails the positive-definiteness condition; "
                      "convergence is not guaranteed", RuntimeWarning, stacklevel=2)
    A, Abar = mix.A, mix.Abar
    alpha = cfg.step_size(0)
    w0 = np.ones(n)
    x0 = z0.copy()

    if cfg.algorithm == "subgradient_push":
        g0 = inst.grad(x0) + _subgradients(inst, x0)
        z1 = A @ (z0 - alpha * g0)
        w1 = A @ w0
        z_half = None
    else:
        g0 = _grad(inst, x0, cfg.algorithm)
        z_half = A @ z0 - alpha * g0
        if cfg.algorithm == "pg_extra":
            _require_doubly_stochastic(A)
            w1 = w0.copy()
        else:
            w1 = A @ w0
        if cfg.algorithm == "extrapush":
            z1 = z_half.copy()
        else:
            z1 = _prox_rows(inst, z_half, alpha, w1)
    x1 = z1 / w1[:, None]
    state = SolverState(
        t=1, z=z1, z_half=z_half, z_prev=z0, z_half_prev=None, w=w1, x=x1, x_prev=x0,
        grad=_grad(inst, x1, cfg.algorithm), grad_prev=g0 if cfg.algorithm != "subgradient_push"
        else inst.grad(x0),
        y=(Abar - A) @ (z0 + z1), u=z0 + z1,
    )
    return _check_finite(state)


def _require_doubly_stochastic(A):
    if not np.allclose(A.sum(axis=1), 1.0, atol=1e-12) or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("PG-EXTRA needs a symmetric doubly stochastic mixing matrix")


def _advance(state, z_half, z_new, w_new, x_new, grad_new, mix):
    return SolverState(
        t=state.t + 1, z=z_new, z_half=z_half, z_prev=state.z, z_half_prev=state.z_half,
        w=w_new, x=x_new, x_prev=state.x, grad=grad_new, grad_prev=state.grad,
        y=state.y + (mix.Abar - mix.A) @ z_new, u=state.u + z_new,
    )


# ---------------------------------------------------------------- steps


def pg_extrapush_step(state, inst, mix, alpha):
    A, Abar = mix.A, mix.Abar
    z_half = A @ state.z + state.z_half - Abar @ state.z_prev - alpha * (state.grad - state.grad_prev)
    w = A @ state.w
    z = _prox_rows(inst, z_half, alpha, w)
    x = z / w[:, None]
    return _check_finite(_advance(state, z_half, z, w, x, inst.grad(x), mix))


def extrapush_step(state, inst, mix, alpha):
    A, Abar = mix.A, mix.Abar
    z = A @ state.z + state.z - Abar @ state.z_prev - alpha * (state.grad - state.grad_prev)
    w = A @ state.w
    x = z / w[:, None]
    return _check_finite(_advance(state, z.copy(), z, w, x, inst.grad(x), mix))


def p_extrapush_step(state, inst, mix, alpha):
    A, Abar = mix.A, mix.Abar
    z_half = A @ state.z + state.z_half - Abar @ state.z_prev
    w = A @ state.w
    z = _prox_rows(inst, z_half, alpha, w)
    x = z / w[:, None]
    zeros = np.zeros_like(x)
    return _check_finite(_advance(state, z_half, z, w, x, zeros, mix))


def pg_extra_step(state, inst, mix, alpha):
    """Undirected update with ``W = A`` symmetric doubly stochastic and ``x = z``."""
    A, Abar = mix.A, mix.Abar
    z_half = A @ state.z + state.z_half - Abar @ state.z_prev - alpha * (state.grad - state.grad_prev)
    w = state.w.copy()
    z = np.stack([a.prox.prox(z_half[i], alpha) for i, a in enumerate(inst.agents)])
    return _check_finite(_advance(state, z_half, z, w, z.copy(), inst.grad(z), mix))


def subgradient_push_step(state, inst, mix, alpha_t):
    A = mix.A
    g = state.grad + _subgradients(inst, state.x)
    z = A @ (state.z - alpha_t * g)
    w = A @ state.w
    x = z / w[:, None]
    return _check_finite(_advance(state, None, z, w, x, inst.grad(x), mix))


STEPS = {
    "pg_extrapush": pg_extrapush_step,
    "extrapush": extrapush_step,
    "p_extrapush": p_extrapush_step,
    "pg_extra": pg_extra_step,
    "subgradient_push": subgradient_push_step,
}


# ---------------------------------------------------------------- drivers


def iterate(inst, mix, cfg, state=None):
    """Yield the state after every round, starting with the initialization."""
    step = STEPS[cfg.algorithm]
    if state is None:
        state = init(inst, mix, cfg)
    yield state
    for _ in range(cfg.max_iter):
        state = step(state, inst, mix, cfg.step_size(state.t))
        yield state


def make_record(state, inst, mix, alpha, reference=None, lyapunov=None):
    from .analysis import lyapunov_value, optimality_residual

    x = state.x
    xbar = x.mean(axis=0)
    if reference is not None:
        dist = float(np.linalg.norm(x - np.asarray(reference)[None, :]))
    else:
        dist = float("nan")
    cert = optimality_residual(state, inst, mix, alpha)
    lyap = float("nan")
    if lyapunov is not None:
        lyap = lyapunov_value(np.vstack([state.z, state.u]), lyapunov.vstar, lyapunov.G)
    return TraceRecord(
        t=state.t,
        dist_to_ref=dist,
        consensus_error=float(np.linalg.norm(x - xbar[None, :])),
        optimality_residual=cert.max,
        objective=inst.objective(xbar),
        lyapunov=lyap,
    )


def run(inst, mix, cfg, state=None):
    """Run ``cfg.max_iter`` rounds after initialization and return the trace.

    On divergence the raised ``NonFiniteIterate`` carries the partial trace.
    """
    trace = []
    last = None
    try:
        for state in iterate(inst, mix, cfg, state=state):
            last = state
            if (state.t - 1) % cfg.record_every == 0:
                trace.append(make_record(state, inst, mix, cfg.step_size(state.t), cfg.reference,
                                         cfg.lyapunov))
    except NonFiniteIterate as exc:
        exc.trace = trace
        raise
    if last is not None and trace and trace[-1].t != last.t:
        trace.append(make_record(last, inst, mix, cfg.step_size(last.t), cfg.reference, cfg.lyapunov))
    return trace


def seed_at_optimum(triple, inst, mix, alpha):
    """State sitting exactly on an optimal triple (see ``analysis.optimal_triple``)."""
    n = inst.n
    z_half = triple.z + alpha * triple.g
    grad = inst.grad(triple.x)
    u = triple.u if getattr(triple, "u", None) is not None else np.zeros_like(triple.z)
    return SolverState(
        t=1, z=triple.z.copy(), z_half=z_half.copy(), z_prev=triple.z.copy(),
        z_half_prev=z_half.copy(), w=n * mix.phi.copy(), x=triple.x.copy(),
        x_prev=triple.x.copy(), grad=grad, grad_prev=grad.copy(), y=triple.y.copy(), u=u,
    )
