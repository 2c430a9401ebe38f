"""Self-checks run by ``diropt verify``: push-sum bound, reductions and prox oracles."""

import numpy as np

from .graph import (
    build_mixing_matrix,
    complete_network,
    five_node_network,
    metropolis_matrix,
    random_network,
    verify_mixing_rate,
    MixingMatrix,
)
from .problems import make_l1_least_squares
from .prox import (
    GeometricMedianOp,
    HalfspaceOp,
    L0Op,
    L1Op,
    LqOp,
    oracle_prox_1d,
    prox_scaled,
)
from .solvers import RunConfig, iterate


def check_push_sum(graphs=10, T=100, seed=0):
    worst = verify_mixing_rate(build_mixing_matrix(five_node_network()).A,
                               build_mixing_matrix(five_node_network()).phi, T)
    rng = np.random.default_rng(seed)
    for _ in range(graphs):
        n = int(rng.integers(2, 9))
        net, _ = random_network(n, 0.5, rng)
        mix = build_mixing_matrix(net)
        worst = max(worst, verify_mixing_rate(mix.A, mix.phi, T))
    return worst < 0, f"max violation {worst:.3e}"


def check_reductions(rounds=200, seed=0):
    inst = make_l1_least_squares(5, 8, 10, 0.5, seed).with_prox_removed()
    net, _ = random_network(5, 0.5, seed)
    mix = build_mixing_matrix(net)
    a = list(iterate(inst, mix, RunConfig("pg_extrapush", alpha=0.005, max_iter=rounds)))
    b = list(iterate(inst, mix, RunConfig("extrapush", alpha=0.005, max_iter=rounds)))
    gap = max(float(np.max(np.abs(s.z - u.z))) for s, u in zip(a, b))

    sym = MixingMatrix.from_matrix(metropolis_matrix(complete_network(5)))
    l1 = make_l1_least_squares(5, 8, 10, 0.5, seed)
    p = list(iterate(l1, sym, RunConfig("pg_extrapush", alpha=0.005, max_iter=rounds)))
    e = list(iterate(l1, sym, RunConfig("pg_extra", alpha=0.005, max_iter=rounds)))
    wdev = max(float(np.max(np.abs(s.w - 1.0))) for s in p)
    gap2 = max(float(np.max(np.abs(s.z - u.z))) for s, u in zip(p, e))
    ok = gap <= 1e-12 and wdev <= 1e-12 and gap2 <= 1e-12
    return ok, f"extrapush gap {gap:.1e}, w drift {wdev:.1e}, pg-extra gap {gap2:.1e}"


def prox_cases():
    """``(name, op, r_1d)`` triples exercised by the oracle comparison."""
    return [
        ("l0", L0Op(0.7), lambda u: 0.7 * (u != 0)),
        ("l1", L1Op(0.7), lambda u: 0.7 * np.abs(u)),
        ("l1/2", LqOp(0.7, 0.5), lambda u: 0.7 * np.sqrt(np.abs(u))),
        ("l2/3", LqOp(0.7, 2.0 / 3.0), lambda u: 0.7 * np.abs(u) ** (2.0 / 3.0)),
        ("geometric_median", GeometricMedianOp(np.array([0.4])), lambda u: np.abs(u - 0.4)),
        ("halfspace", HalfspaceOp(np.array([1.5]), 0.3),
         lambda u: np.where(1.5 * u <= 0.3 + 1e-12 * (1.0 + np.abs(u)), 0.0, np.inf)),
    ]


def scaled_objective(r, z, alpha, w):
    """1-D objective minimized by ``prox_scaled``: ``w r(u / w) + (u - z)^2 / (2 alpha)``."""
    return lambda u: w * r(np.asarray(u) / w) + (np.asarray(u) - z) ** 2 / (2.0 * alpha)


def prox_gap(op, r, z, alpha, w):
    """Objective excess of the closed-form prox over the grid+refine oracle (<= 0 is a pass)."""
    obj = scaled_objective(r, z, alpha, w)
    u = float(prox_scaled(op, np.array([z]), alpha, w)[0])
    span = 4.0 * (abs(z) + w + alpha + 1.0)
    step = min(1e-3, span / 2e4)
    u_or = oracle_prox_1d(lambda v: w * r(v / w), z, alpha, -span, span, step=step)
    return float(obj(u)) - float(obj(u_or))


def check_prox(samples=100, seed=0, n=5):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _name, op, r in prox_cases():
        for w in (1.0 / n**n, 0.5, 1.0, 2.0):
            for _ in range(samples):
                z = float(rng.uniform(-3, 3))
                alpha = float(rng.uniform(0.05, 2.0))
                worst = max(worst, prox_gap(op, r, z, alpha, w))
    return worst <= 1e-6, f"worst objective excess {worst:.2e}"


SUITES = {
    "push-sum bound": check_push_sum,
    "reductions": check_reductions,
    "prox oracle": check_prox,
}


def run_all():
    return [(name, *fn()) for name, fn in SUITES.items()]
