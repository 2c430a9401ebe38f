"""Directed networks, column-stochastic mixing matrices and push-sum diagnostics."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BoostFailed, NoConvergence, NotStronglyConnected

C_BOUND = 4.0


def gamma_bound(n):
    """Geometric mixing rate ``1 - 1/n**n`` guaranteed for any strongly connected digraph."""
    return 1.0 - 1.0 / float(n) ** n


@dataclass(frozen=True)
class DirectedNetwork:
    """A digraph on nodes ``0..n-1``.

    ``edges`` holds arcs ``(i, j)`` meaning ``i`` can send to ``j``. Self-loops
    are implicit: every node belongs to its own in- and out-neighborhood.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a network needs at least one node")
        arcs = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"arc ({i}, {j}) out of range for n={self.n}")
            if i != j:
                arcs.add((i, j))
        object.__setattr__(self, "edges", frozenset(arcs))

    def out_neighbors(self, i):
        return sorted({j for (k, j) in self.edges if k == i} | {i})

    def in_neighbors(self, i):
        return sorted({k for (k, j) in self.edges if j == i} | {i})

    def out_degree(self, i):
        return len(self.out_neighbors(i))

    def adjacency(self):
        """Boolean matrix with ``adj[i, j]`` true iff ``i -> j`` or ``i == j``."""
        adj = np.eye(self.n, dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    @classmethod
    def from_out_neighbors(cls, out):
        """Build from a mapping ``node -> iterable of out-neighbors``."""
        n = len(out)
        return cls(n, frozenset((i, j) for i in range(n) for j in out[i]))


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    A: np.ndarray
    Abar: np.ndarray
    phi: np.ndarray
    Dinf: np.ndarray
    gamma_bound: float
    C_bound: float = C_BOUND

    @property
    def n(self):
        return self.A.shape[0]

    @classmethod
    def from_matrix(cls, A, tol=1e-14, phi=None):
        """Validate ``A`` and attach its stationary vector (computed unless given)."""
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("mixing matrix must be square")
        if np.any(A < 0) or not np.allclose(A.sum(axis=0), 1.0, atol=1e-12, rtol=0):
            raise ValueError("mixing matrix must be nonnegative and column-stochastic")
        n = A.shape[0]
        phi = stationary_distribution(A, tol=tol) if phi is None else np.array(phi, dtype=np.float64)
        Abar = 0.5 * (A + np.eye(n))
        Dinf = n * np.diag(phi)
        for arr in (A, Abar, phi, Dinf):
            arr.setflags(write=False)
        return cls(A=A, Abar=Abar, phi=phi, Dinf=Dinf, gamma_bound=gamma_bound(n))


@dataclass(frozen=True)
class MixingDiagnostics:
    """Push-sum constants over all ``t``.

    The probed maxima/minima over ``t <= horizon`` are combined with the
    analytic tail ``|(A^t 1)_i - n phi_i| <= n C gamma^t`` so each field is a
    sound bound, not an estimate. The raw probed values are kept alongside.
    """

    d_plus: float
    d_minus: float
    dinf_plus: float
    dinf_minus: float
    xi: float
    horizon: int
    d_plus_probed: float
    d_minus_probed: float
    xi_probed: float


def check_strong_connectivity(net):
    """True iff every node reaches every other node along arcs."""
    adj = net.adjacency()

    def reach(matrix):
        seen = np.zeros(net.n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(matrix[i]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        return seen.all()

    return bool(reach(adj) and reach(adj.T))


def stationary_distribution(A, tol=1e-14, max_iter=None):
    """Right Perron vector of a column-stochastic ``A`` by power iteration.

    Stops once the sup-norm change between successive iterates drops below
    ``tol``. The default iteration cap is ``min(10 n**n, 10**6)``.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if max_iter is None:
        max_iter = int(min(10.0 * float(n) ** n, 1e6))
    phi = np.full(n, 1.0 / n)
    change = np.inf
    for _ in range(max(max_iter, 1)):
        nxt = A @ phi
        nxt /= nxt.sum()
        change = np.max(np.abs(nxt - phi))
        phi = nxt
        if change < tol:
            return phi
    raise NoConvergence(
        f"power iteration did not reach tol={tol:g} in {max_iter} steps", residual=change
    )


def build_mixing_matrix(net):
    """Uniform out-degree weights: ``A[i, j] = 1/d_j`` for every ``j`` in the in-neighborhood of ``i``."""
    if not check_strong_connectivity(net):
        raise NotStronglyConnected(f"network with n={net.n} is not strongly connected")
    adj = net.adjacency()
    deg = adj.sum(axis=1)
    # column j spreads 1/d_j over the out-neighborhood of j
    A = adj.T / deg[None, :]
    return MixingMatrix.from_matrix(A)


def verify_mixing_rate(A, phi, T):
    """Largest value of ``|(A^t)_ij - phi_i| - C gamma^t`` over ``t <= T``.

    Negative means the geometric bound held everywhere on the probed horizon.
    """
    A = np.asarray(A, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    n = A.shape[0]
    gam = gamma_bound(n)
    P = np.eye(n)
    worst = -np.inf
    for t in range(T + 1):
        dev = np.max(np.abs(P - phi[:, None]))
        worst = max(worst, dev - C_BOUND * gam**t)
        P = A @ P
    return float(worst)


def positive_definiteness_margin(mix):
    """Smallest eigenvalue of ``Dinf^-1 Abar + Abar^T Dinf^-1``."""
    dinv = np.diag(1.0 / np.diag(mix.Dinf))
    sym = dinv @ mix.Abar + mix.Abar.T @ dinv
    return float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[0])


def check_positive_definiteness(mix):
    return positive_definiteness_margin(mix) > 1e-12


def selfish_boost(net, A, max_beta=2**10):
    """Inflate self-weights until the positive-definiteness check passes.

    Returns ``(A_boosted, beta)`` with ``A_boosted = (A + beta I)/(1 + beta)``
    for the smallest ``beta`` in ``0, 1, 2, 4, ...``.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if net is not None and net.n != n:
        raise ValueError("network and matrix sizes differ")
    # the boost keeps the stationary vector, and large beta slows power iteration
    phi = stationary_distribution(A)
    beta = 0
    while beta <= max_beta:
        cand = (A + beta * np.eye(n)) / (1.0 + beta)
        if check_positive_definiteness(MixingMatrix.from_matrix(cand, phi=phi)):
            return cand, beta
        beta = 1 if beta == 0 else 2 * beta
    raise BoostFailed(f"no beta <= {max_beta} yields a positive definite weighting")


def mixing_diagnostics(mix, horizon=200):
    n = mix.n
    A = mix.A
    gam = mix.gamma_bound
    w = np.ones(n)
    d_plus = d_minus = 0.0
    xi = np.inf
    for _ in range(horizon + 1):
        d_plus = max(d_plus, float(np.linalg.norm(w)))
        d_minus = max(d_minus, float(np.linalg.norm(1.0 / w)))
        xi = min(xi, float(w.min()))
        w = A @ w
    wstar = n * mix.phi
    slack = n * mix.C_bound * gam ** (horizon + 1)
    floor = 1.0 / float(n) ** n
    upper = np.minimum(wstar + slack, float(n))
    lower = np.maximum(wstar - slack, floor)
    return MixingDiagnostics(
        d_plus=max(d_plus, float(np.linalg.norm(upper))),
        d_minus=max(d_minus, float(np.linalg.norm(1.0 / lower))),
        dinf_plus=float(np.linalg.norm(wstar)),
        dinf_minus=float(np.linalg.norm(1.0 / wstar)),
        xi=min(xi, float(lower.min())),
        horizon=horizon,
        d_plus_probed=d_plus,
        d_minus_probed=d_minus,
        xi_probed=xi,
    )


# ---------------------------------------------------------------- generators


def five_node_network():
    """The five-node example digraph (0-indexed)."""
    return DirectedNetwork.from_out_neighbors(
        {0: [1, 2, 4], 1: [0, 3, 4], 2: [4], 3: [0], 4: [1, 2]}
    )


def complete_network(n):
    return DirectedNetwork(n, frozenset((i, j) for i in range(n) for j in range(n) if i != j))


def ring_network(n):
    """Directed cycle ``0 -> 1 -> ... -> n-1 -> 0``."""
    return DirectedNetwork(n, frozenset((i, (i + 1) % n) for i in range(n)))


def random_network(n, prob=0.5, seed=None, max_tries=10_000):
    """Erdos-Renyi digraph resampled until strongly connected.

    Returns ``(net, tries)``; ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for tries in range(1, max_tries + 1):
        mask = rng.random((n, n)) < prob
        np.fill_diagonal(mask, False)
        rows, cols = np.nonzero(mask)
        net = DirectedNetwork(n, frozenset(zip(rows.tolist(), cols.tolist())))
        if check_strong_connectivity(net):
            return net, tries
    raise NotStronglyConnected(f"no strongly connected sample in {max_tries} tries")


def metropolis_matrix(net):
    """Symmetric doubly stochastic weights for an undirected (symmetric) network."""
    adj = net.adjacency()
    if not np.array_equal(adj, adj.T):
        raise ValueError("Metropolis weights need a symmetric network")
    deg = adj.sum(axis=1) - 1
    n = net.n
    W = np.zeros((n, n))
    for i, j in net.edges:
        W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W
