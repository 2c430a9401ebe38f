"""Seeded generators for the four experiment families and centralized reference solvers."""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleInstance, NoConvergence
from .prox import (
    GeometricMedianOp,
    HalfspaceOp,
    L0Op,
    L1Op,
    LqOp,
    ZeroOp,
    prox_halfspace,
    prox_l1,
)

log = logging.getLogger(__name__)

FAMILIES = ("geometric_median", "l1_ls", "qp", "lq_ls")


@dataclass(eq=False)
class AgentObjective:
    grad: object
    lipschitz: float
    prox: object
    value: object


@dataclass(eq=False)
class Reference:
    """A centralized reference point with its residual and provenance label."""

    x: np.ndarray
    residual: float
    certified: bool
    method: str
    label: str = ""


@dataclass(eq=False)
class ProblemInstance:
    family: str
    n: int
    p: int
    agents: list
    data: dict
    params: dict
    seed: int
    reference: Reference = None
    mu_estimate: float = 0.0
    resamples: int = 0
    _batched_grad: object = field(default=None, repr=False)

    @property
    def reference_solution(self):
        """Reference vector, or the marker ``"iterate-limit"`` for nonconvex families."""
        if self.family == "lq_ls":
            return "iterate-limit"
        return None if self.reference is None else self.reference.x

    @property
    def lipschitz_max(self):
        return max(a.lipschitz for a in self.agents)

    @property
    def has_smooth(self):
        return self.family != "geometric_median"

    @property
    def has_nonsmooth(self):
        return not all(isinstance(a.prox, ZeroOp) for a in self.agents)

    @property
    def convex(self):
        return all(a.prox.convex for a in self.agents)

    def grad(self, X):
        """Stacked smooth gradients, row ``i`` evaluated at ``X[i]``."""
        X = np.asarray(X, dtype=np.float64)
        if self._batched_grad is not None:
            return self._batched_grad(X)
        return np.stack([a.grad(X[i]) for i, a in enumerate(self.agents)])

    def smooth_value(self, x):
        return float(sum(a.value(x) for a in self.agents))

    def objective(self, x):
        """Global objective ``sum_i s_i(x) + r_i(x)`` at a single point."""
        x = np.asarray(x, dtype=np.float64)
        return float(sum(a.value(x) + a.prox.evaluate(x) for a in self.agents))

    def with_smooth_removed(self):
        """Copy with ``s_i = 0`` (used to exercise the prox-only recursion)."""
        agents = [
            AgentObjective(lambda x: np.zeros_like(x), 0.0, a.prox, lambda x: 0.0)
            for a in self.agents
        ]
        zero = lambda X: np.zeros_like(X)  # noqa: E731
        return ProblemInstance(
            self.family, self.n, self.p, agents, self.data, self.params, self.seed,
            mu_estimate=0.0, _batched_grad=zero,
        )

    def with_prox_removed(self):
        """Copy with ``r_i = 0``."""
        agents = [AgentObjective(a.grad, a.lipschitz, ZeroOp(), a.value) for a in self.agents]
        return ProblemInstance(
            self.family, self.n, self.p, agents, self.data, self.params, self.seed,
            mu_estimate=self.mu_estimate, _batched_grad=self._batched_grad,
        )


def parse_q(q):
    """Accept ``0``, ``1/2``, ``2/3`` as numbers or fraction strings."""
    val = float(Fraction(str(q).strip())) if isinstance(q, str) else float(q)
    for cand in (0.0, 0.5, 2.0 / 3.0):
        if abs(val - cand) < 1e-6:
            return cand
    raise ValueError(f"q must be one of 0, 1/2, 2/3 (got {q})")


def _per_agent(value, n):
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (n,)).copy()
    return arr


# ---------------------------------------------------------------- generators


def make_geometric_median(n, p, seed, reference=True):
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((n, p))
    return _geometric_median_instance(b, seed, reference)


def _geometric_median_instance(b, seed, reference=True):
    n, p = b.shape
    agents = [
        AgentObjective(lambda x: np.zeros_like(x), 0.0, GeometricMedianOp(b[i].copy()), lambda x: 0.0)
        for i in range(n)
    ]
    inst = ProblemInstance(
        "geometric_median", n, p, agents, {"b": b}, {}, seed,
        _batched_grad=lambda X: np.zeros_like(X),
    )
    if reference:
        inst.reference = centralized_reference(inst)
    return inst


def _least_squares_parts(B, b):
    n = B.shape[0]
    lips = np.array([np.linalg.eigvalsh(B[i].T @ B[i])[-1] for i in range(n)])

    def batched(X):
        resid = np.einsum("imp,ip->im", B, X) - b
        return np.einsum("imp,im->ip", B, resid)

    def grad_i(i):
        return lambda x: B[i].T @ (B[i] @ x - b[i])

    def value_i(i):
        return lambda x: 0.5 * float(np.sum((B[i] @ x - b[i]) ** 2))

    hess = np.einsum("imp,imq->pq", B, B)
    mu = float(np.linalg.eigvalsh(hess)[0]) / n
    return lips, batched, grad_i, value_i, max(mu, 0.0)


def make_l1_least_squares(n, p, m_i, lambda_i, seed, reference=True, data_scale=1.0):
    """``|B_i x - b_i|^2 / 2 + lambda_i |x|_1``; ``b_i`` standard normal, ``B_i`` normal with std ``data_scale``."""
    if n < 1 or p < 1 or m_i < 1:
        raise ValueError("n, p and m_i must be positive")
    rng = np.random.default_rng(seed)
    B = data_scale * rng.standard_normal((n, m_i, p))
    b = rng.standard_normal((n, m_i))
    return _ls_instance("l1_ls", B, b, _per_agent(lambda_i, n), None, seed, reference)


def make_lq_least_squares(n, p, m_i, lambda_i, q, seed, reference=False, data_scale=1.0):
    q = parse_q(q)
    lam = _per_agent(lambda_i, n)
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive for the lq family")
    rng = np.random.default_rng(seed)
    B = data_scale * rng.standard_normal((n, m_i, p))
    b = rng.standard_normal((n, m_i))
    return _ls_instance("lq_ls", B, b, lam, q, seed, reference)


def _ls_instance(family, B, b, lam, q, seed, reference):
    n, m_i, p = B.shape
    lips, batched, grad_i, value_i, mu = _least_squares_parts(B, b)
    if family == "l1_ls":
        ops = [L1Op(float(lam[i])) for i in range(n)]
    elif q == 0.0:
        ops = [L0Op(float(lam[i])) for i in range(n)]
    else:
        ops = [LqOp(float(lam[i]), q) for i in range(n)]
    agents = [AgentObjective(grad_i(i), float(lips[i]), ops[i], value_i(i)) for i in range(n)]
    params = {"m_i": m_i, "lambda": lam.tolist()}
    if q is not None:
        params["q"] = q
    inst = ProblemInstance(
        family, n, p, agents, {"B": B, "b": b}, params, seed,
        mu_estimate=mu, _batched_grad=batched,
    )
    if reference:
        inst.reference = centralized_reference(inst)
    return inst


def make_qp(n, p, seed, scale=None, rank=None, reference=True, max_resamples=20):
    """Quadratic objectives ``x'Q_i x / 2 + h_i'x`` with one halfspace constraint per agent.

    ``Q_i = scale * G_i' G_i`` with ``G_i`` a ``rank x p`` standard normal
    factor (``rank`` defaults to ``p``, ``scale`` to ``p**-1.5``).
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    rank = p if rank is None else rank
    scale = float(p) ** -1.5 if scale is None else scale
    for attempt in range(max_resamples + 1):
        rng = np.random.default_rng(seed + attempt)
        G = rng.standard_normal((n, rank, p))
        Q = scale * np.einsum("irp,irq->ipq", G, G)
        h = rng.standard_normal((n, p))
        a = rng.standard_normal((n, p))
        bq = rng.standard_normal(n)
        try:
            inst = _qp_instance(Q, h, a, bq, seed, reference, {"scale": scale, "rank": rank})
        except InfeasibleInstance:
            log.warning("qp instance with seed %d infeasible, resampling", seed + attempt)
            continue
        inst.resamples = attempt
        return inst
    raise InfeasibleInstance(f"no feasible qp instance in {max_resamples + 1} draws")


def _qp_instance(Q, h, a, bq, seed, reference=True, params=None):
    n, p, _ = Q.shape
    if not halfspaces_feasible(a, bq):
        raise InfeasibleInstance("halfspace intersection is empty")
    lips = np.array([max(np.linalg.eigvalsh(Q[i])[-1], 0.0) for i in range(n)])

    def batched(X):
        return np.einsum("ipq,iq->ip", Q, X) + h

    def grad_i(i):
        return lambda x: Q[i] @ x + h[i]

    def value_i(i):
        return lambda x: 0.5 * float(x @ Q[i] @ x) + float(h[i] @ x)

    agents = [
        AgentObjective(grad_i(i), float(lips[i]), HalfspaceOp(a[i].copy(), float(bq[i])), value_i(i))
        for i in range(n)
    ]
    mu = max(float(np.linalg.eigvalsh(Q.sum(axis=0))[0]) / n, 0.0)
    inst = ProblemInstance(
        "qp", n, p, agents, {"Q": Q, "h": h, "a": a, "bq": bq}, dict(params or {}), seed,
        mu_estimate=mu, _batched_grad=batched,
    )
    if reference:
        inst.reference = centralized_reference(inst)
    return inst


def halfspaces_feasible(a, b):
    """LP feasibility of ``{x : a_i.x <= b_i for all i}``."""
    n, p = a.shape
    res = linprog(np.zeros(p), A_ub=a, b_ub=b, bounds=[(None, None)] * p, method="highs")
    return res.status == 0


# ---------------------------------------------------------------- explicit data


def geometric_median_from_points(b, seed=0, reference=True):
    """Instance with anchors ``b`` (``n x p``)."""
    return _geometric_median_instance(np.asarray(b, dtype=np.float64), seed, reference)


def least_squares_from_data(B, b, lam, q=None, seed=0, reference=True):
    """Instance from ``B`` (``n x m x p``) and ``b`` (``n x m``); ``q=None`` gives the l1 family."""
    B = np.asarray(B, dtype=np.float64)
    lam = _per_agent(lam, B.shape[0])
    family = "l1_ls" if q is None else "lq_ls"
    return _ls_instance(family, B, np.asarray(b, dtype=np.float64), lam,
                        None if q is None else parse_q(q), seed, reference)


def qp_from_data(Q, h, a, bq, seed=0, reference=True):
    """Instance from per-agent ``Q_i``, ``h_i`` and one halfspace ``a_i.x <= bq_i`` each."""
    arrs = (np.asarray(v, dtype=np.float64) for v in (Q, h, a, bq))
    return _qp_instance(*arrs, seed, reference)


# ---------------------------------------------------------------- reference solvers


def weiszfeld(points, tol=1e-10, max_iter=200_000):
    """Geometric median with the Vardi-Zhang fix for iterates landing on a data point.

    Returns ``(x, residual)`` where the residual is the norm of the minimal-norm
    subgradient of ``sum_i |x - b_i|``.
    """
    points = np.asarray(points, dtype=np.float64)
    # an anchor is the median iff the other unit vectors sum to norm <= its multiplicity;
    # the iteration only creeps toward such a point, so test the anchors directly
    for k in range(points.shape[0]):
        if _median_residual(points, points[k]) == 0.0:
            return points[k].copy(), 0.0
    x = points.mean(axis=0)
    res = _median_residual(points, x)
    for _ in range(max_iter):
        if res < tol:
            return x, res
        diff = points - x
        dist = np.linalg.norm(diff, axis=1)
        at = dist < 1e-300
        inv = np.zeros_like(dist)
        inv[~at] = 1.0 / dist[~at]
        t_x = (inv[:, None] * points).sum(axis=0) / inv.sum()
        if at.any():
            r_vec = (inv[:, None] * diff).sum(axis=0)
            r_norm = np.linalg.norm(r_vec)
            eta = float(at.sum())
            if r_norm <= eta:
                return x, 0.0
            frac = eta / r_norm
            x = (1.0 - frac) * t_x + frac * x
        else:
            x = t_x
        res = _median_residual(points, x)
    raise NoConvergence("Weiszfeld iteration did not converge", residual=res)


def _median_residual(points, x):
    diff = x - points
    dist = np.linalg.norm(diff, axis=1)
    at = dist < 1e-300
    g = (diff[~at] / dist[~at, None]).sum(axis=0)
    if at.any():
        return max(0.0, float(np.linalg.norm(g)) - float(at.sum()))
    return float(np.linalg.norm(g))


def ista(B, b, lam, tol=1e-10, max_iter=1_000_000, x0=None):
    """Centralized proximal gradient on ``sum_i |B_i x - b_i|^2 / 2 + lam_i |x|_1``.

    Returns ``(x, residual)`` with residual ``|x - prox(x - t grad)| / t``.
    """
    H = np.einsum("imp,imq->pq", B, B)
    c = np.einsum("imp,im->p", B, b)
    L = float(np.linalg.eigvalsh(H)[-1])
    t = 1.0 / L
    lam_sum = float(np.sum(lam))
    x = np.zeros(B.shape[2]) if x0 is None else np.array(x0, dtype=np.float64)
    res = np.inf
    for _ in range(max_iter):
        nxt = prox_l1(x - t * (H @ x - c), t * lam_sum)
        res = float(np.linalg.norm(nxt - x)) / t
        x = nxt
        if res < tol:
            return x, res
    raise NoConvergence("ISTA did not reach tolerance", residual=res)


def dykstra_halfspaces(y, a, b, tol=1e-14, max_sweeps=100_000):
    """Project ``y`` onto ``{x : a_i.x <= b_i}`` by Dykstra's alternating projections."""
    n = a.shape[0]
    x = np.array(y, dtype=np.float64)
    incr = np.zeros((n, x.size))
    for _ in range(max_sweeps):
        prev = x.copy()
        for i in range(n):
            tmp = x + incr[i]
            x = prox_halfspace(tmp, a[i], b[i])
            incr[i] = tmp - x
        if np.max(np.abs(x - prev)) < tol:
            return x
    viol = float(np.max(a @ x - b))
    if viol > 1e-8:
        raise InfeasibleInstance(f"Dykstra stalled with constraint violation {viol:g}")
    return x


def projected_gradient_qp(Q, h, a, b, tol=1e-8, max_iter=200_000):
    """Centralized projected gradient on ``sum_i x'Q_i x / 2 + h_i'x`` over the halfspace intersection."""
    H = Q.sum(axis=0)
    c = h.sum(axis=0)
    L = float(np.linalg.eigvalsh(H)[-1])
    t = 1.0 / L
    x = dykstra_halfspaces(np.zeros(H.shape[0]), a, b)
    res = np.inf
    for _ in range(max_iter):
        nxt = dykstra_halfspaces(x - t * (H @ x + c), a, b)
        res = float(np.linalg.norm(nxt - x)) / t
        x = nxt
        if res < tol:
            return x, res
    raise NoConvergence("projected gradient did not reach tolerance", residual=res)


def _lq_multistart(inst, tol, max_iter, starts=6):
    B, b = inst.data["B"], inst.data["b"]
    H = np.einsum("imp,imq->pq", B, B)
    c = np.einsum("imp,im->p", B, b)
    t = 1.0 / float(np.linalg.eigvalsh(H)[-1])
    lam_sum = float(sum(a.prox.lam for a in inst.agents))
    op = inst.agents[0].prox
    rep = type(op)(lam_sum) if isinstance(op, L0Op) else LqOp(lam_sum, op.q)
    rng = np.random.default_rng(inst.seed)
    candidates = [np.zeros(inst.p), np.linalg.lstsq(H, c, rcond=None)[0]]
    candidates += [rng.standard_normal(inst.p) for _ in range(max(starts - 2, 0))]
    best = None
    for x in candidates:
        res = np.inf
        for _ in range(max_iter):
            nxt = rep.prox(x - t * (H @ x - c), t)
            res = float(np.linalg.norm(nxt - x)) / t
            x = nxt
            if res < tol:
                break
        val = inst.objective(x)
        if best is None or val < best[0]:
            best = (val, x, res)
    return best[1], best[2]


def centralized_reference(inst, tol=None, max_iter=None):
    """Dispatch to the family's centralized solver and wrap the result."""
    fam = inst.family
    if fam == "geometric_median":
        x, res = weiszfeld(inst.data["b"], tol=tol or 1e-10, max_iter=max_iter or 200_000)
        return Reference(x, res, True, "weiszfeld")
    if fam == "l1_ls":
        lam = np.array([a.prox.lam for a in inst.agents])
        if np.all(lam == 0):
            H = np.einsum("imp,imq->pq", inst.data["B"], inst.data["B"])
            c = np.einsum("imp,im->p", inst.data["B"], inst.data["b"])
            x = np.linalg.pinv(H) @ c
            return Reference(x, float(np.linalg.norm(H @ x - c)), True, "min-norm least squares")
        x, res = ista(inst.data["B"], inst.data["b"], lam, tol=tol or 1e-10,
                      max_iter=max_iter or 1_000_000)
        return Reference(x, res, True, "ista")
    if fam == "qp":
        d = inst.data
        x, res = projected_gradient_qp(d["Q"], d["h"], d["a"], d["bq"], tol=tol or 1e-8,
                                       max_iter=max_iter or 200_000)
        return Reference(x, res, True, "projected gradient + dykstra")
    if fam == "lq_ls":
        x, res = _lq_multistart(inst, tol or 1e-10, max_iter or 20_000)
        return Reference(x, res, False, "multistart proximal gradient",
                         label="reference, not certified optimum")
    raise ValueError(f"unknown family {fam}")
