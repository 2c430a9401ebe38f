"""Optimality certificates, the Lyapunov machinery, rate constants and rate fitting.

Everything here is a pure function of already-computed iterates or matrices.
Norms are Frobenius norms on ``n x p`` matrices throughout.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import SingularSystem, TraceTooShort
from .prox import GeometricMedianOp, HalfspaceOp, L1Op, ZeroOp

ZERO_EIG_RTOL = 1e-10


# ---------------------------------------------------------------- optimality


@dataclass(frozen=True)
class OptimalityCertificate:
    consensus_residual: float
    stationarity_residual: float
    y_feasibility: float

    @property
    def max(self):
        return max(self.consensus_residual, self.stationarity_residual, self.y_feasibility)


def selected_subgradient(state, inst, alpha):
    """Nonsmooth subgradient picked by the last prox step, ``(z_half - z) / alpha``.

    Falls back to each operator's own selection when no prox was taken.
    """
    if state.z_half is None:
        return np.stack([a.prox.subgradient(state.x[i]) for i, a in enumerate(inst.agents)])
    return (state.z_half - state.z) / alpha


def optimality_residual(state, inst, mix, alpha):
    z = state.z
    consensus = float(np.linalg.norm(z - np.outer(mix.phi, z.sum(axis=0))))
    g = state.grad + selected_subgradient(state, inst, alpha)
    stationarity = float(np.linalg.norm(g.sum(axis=0)))
    y_feas = float(np.linalg.norm(state.y.sum(axis=0)))
    return OptimalityCertificate(consensus, stationarity, y_feas)


@dataclass(eq=False)
class OptimalTriple:
    """Consensual optimum ``x``, scaled state ``z = n phi x*'`` and dual ``y``."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    g: np.ndarray
    u: np.ndarray = None


def balanced_subgradients(inst, x_star, tol=1e-9):
    """Per-agent ``g_i`` in the subdifferential of ``r_i`` at ``x*`` with ``sum_i (grad s_i + g_i) = 0``."""
    n, p = inst.n, inst.p
    x_star = np.asarray(x_star, dtype=np.float64)
    X = np.tile(x_star, (n, 1))
    grads = inst.grad(X)
    ops = [a.prox for a in inst.agents]
    if all(isinstance(op, ZeroOp) for op in ops):
        return np.zeros((n, p))
    if all(isinstance(op, L1Op) for op in ops):
        lam = np.array([op.lam for op in ops])
        g = lam[:, None] * np.sign(x_star)[None, :]
        zero = np.abs(x_star) <= tol
        if lam.sum() > 0:
            # split the leftover among agents in proportion to their weights
            need = -grads[:, zero].sum(axis=0)
            g[:, zero] = (lam / lam.sum())[:, None] * need[None, :]
        return g
    if all(isinstance(op, GeometricMedianOp) for op in ops):
        anchors = np.stack([op.anchor for op in ops])
        diff = x_star[None, :] - anchors
        dist = np.linalg.norm(diff, axis=1)
        at = dist <= tol
        g = np.zeros((n, p))
        g[~at] = diff[~at] / dist[~at, None]
        if at.any():
            k = int(np.flatnonzero(at)[0])
            g[k] = -(g.sum(axis=0) - g[k]) - grads.sum(axis=0)
        return g
    if all(isinstance(op, HalfspaceOp) for op in ops):
        a = np.stack([op.a for op in ops])
        b = np.array([op.b for op in ops])
        active = np.flatnonzero(np.abs(a @ x_star - b) <= 1e-6 * np.maximum(1.0, np.abs(b)))
        g = np.zeros((n, p))
        if active.size:
            nu, _ = nnls(a[active].T, -grads.sum(axis=0))
            g[active] = nu[:, None] * a[active]
        return g
    raise NotImplementedError("balanced subgradients need a homogeneous convex regularizer")


def optimal_triple(inst, mix, alpha, x_star=None, g_star=None):
    """Build ``(z*, y*, x*)`` satisfying the fixed-point conditions at ``x*``."""
    if x_star is None:
        x_star = inst.reference.x
    x_star = np.asarray(x_star, dtype=np.float64)
    n = inst.n
    X = np.tile(x_star, (n, 1))
    g = balanced_subgradients(inst, x_star) if g_star is None else np.asarray(g_star, dtype=np.float64)
    Z = n * mix.phi[:, None] * x_star[None, :]
    Y = -alpha * (inst.grad(X) + g)
    return OptimalTriple(x=X, z=Z, y=Y, g=g)


# ---------------------------------------------------------------- Lyapunov


@dataclass(eq=False)
class LyapunovState:
    N: np.ndarray
    M: np.ndarray
    G: np.ndarray
    S: np.ndarray
    zstar: np.ndarray
    ustar: np.ndarray
    vstar: np.ndarray
    sym_eigs: np.ndarray
    ustar_residual: float


def lyapunov_matrices(mix):
    dinv = np.diag(1.0 / np.diag(mix.Dinf))
    N = dinv @ mix.Abar
    M = dinv @ (mix.Abar - mix.A)
    n = mix.n
    O = np.zeros((n, n))
    G = np.block([[N.T, O], [O, M]])
    S = np.block([[O, M], [-M.T, O]])
    return N, M, G, S


def build_lyapunov(mix, triple, psd_tol=1e-10):
    """Assemble ``G``, ``S`` and ``v* = (z*; u*)`` with the minimum-norm ``u*``."""
    N, M, G, S = lyapunov_matrices(mix)
    D = mix.Abar - mix.A
    ustar = np.linalg.pinv(D) @ triple.y
    resid = float(np.linalg.norm(D @ ustar - triple.y))
    if resid > 1e-8:
        raise SingularSystem(f"(Abar - A) u = y* has least-squares residual {resid:g}")
    msym = np.linalg.eigvalsh(M + M.T)
    gsym = np.linalg.eigvalsh(G + G.T)
    scale = max(1.0, float(np.max(np.abs(gsym))))
    if msym[0] < -psd_tol * scale:
        raise ValueError(f"M + M' is not positive semidefinite (min eig {msym[0]:g})")
    triple.u = ustar
    return LyapunovState(
        N=N, M=M, G=G, S=S, zstar=triple.z, ustar=ustar,
        vstar=np.vstack([triple.z, ustar]), sym_eigs=gsym, ustar_residual=resid,
    )


def g_norm_sq(x, G):
    """``<x, G x>`` summed over columns, i.e. ``||x||_G^2``."""
    return float(np.sum(x * (G @ x)))


def lyapunov_value(v, vstar, G):
    return g_norm_sq(np.asarray(v) - vstar, G)


def error_vector(mix, grad_prev, subgrad_next):
    """Stacked ``(Dinf^-1 (subgrad(x^{t+1}) + grad s(x^t)); 0)``."""
    top = (subgrad_next + grad_prev) / np.diag(mix.Dinf)[:, None]
    return np.vstack([top, np.zeros_like(top)])


def update_identity_residual(lyap, v_now, v_next, e_now, alpha):
    """Residual of ``G'(v^{t+1} - v^t) + S v^{t+1} + alpha e^t``."""
    return float(np.linalg.norm(lyap.G.T @ (v_next - v_now) + lyap.S @ v_next + alpha * e_now))


def lyapunov_monitor(v_trace, vstar, G, delta, Gamma0, gamma, t0=0):
    """Per-round ``(1 + delta)|v^{t+1} - v*|_G^2 - Gamma0 gamma^t - |v^t - v*|_G^2``.

    ``v_trace[k]`` is ``v`` at round ``t0 + k``. Non-positive entries confirm the
    contraction inequality on that round.
    """
    vals = [lyapunov_value(v, vstar, G) for v in v_trace]
    out = []
    for k in range(len(vals) - 1):
        t = t0 + k
        out.append((1.0 + delta) * vals[k + 1] - Gamma0 * gamma**t - vals[k])
    return out


# ---------------------------------------------------------------- rate constants


@dataclass(frozen=True)
class TheoryInapplicable:
    """Typed marker: a premise of the rate theorem fails for this instance."""

    condition: str
    detail: str
    values: dict = field(default_factory=dict)

    admissible = False


@dataclass(frozen=True)
class RateConstants:
    L_bar: float
    mu_bar: float
    c1: float
    c2: float
    c3: float
    a: float
    eta_bar: float
    sigma: float
    alpha: float
    delta: float
    Delta1: float
    Delta2: float
    Delta3: float
    alpha_lo: float
    alpha_hi: float
    spectral: dict = field(default_factory=dict)
    Gamma0: float = None
    Gamma: float = None
    T_star: int = None

    admissible = True


def smallest_nonzero_eig(sym):
    eig = np.linalg.eigvalsh(sym)
    cut = ZERO_EIG_RTOL * max(abs(eig[-1]), 1e-300)
    nz = eig[eig > cut]
    if nz.size == 0:
        raise SingularSystem("matrix has no nonzero eigenvalue")
    return float(nz[0])


def spectral_inputs(mix):
    """Eigenvalue quantities of ``N`` and ``M`` feeding the rate constants."""
    N, M, _, _ = lyapunov_matrices(mix)
    lam_tilde = smallest_nonzero_eig(M.T @ M)
    c1 = float(np.linalg.eigvalsh(M @ M.T)[-1]) / lam_tilde
    c2 = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1]) / lam_tilde
    ntn_max = float(np.linalg.eigvalsh(N.T @ N)[-1])
    c3 = float(np.linalg.eigvalsh(N @ N.T)[-1]) + 3.0 * c1 * ntn_max
    nsym = np.linalg.eigvalsh(N.T + N)
    return {
        "c1": c1,
        "c2": c2,
        "c3": c3,
        "lam_min_NtN_sum": float(nsym[0]),
        "lam_max_N_sym": float(nsym[-1]) / 2.0,
        "lam_max_NtN": ntn_max,
    }


def step_size_interval(mu_bar, L_bar, c1, c2, c3, lam_min_NtN_sum, lam_max_N_sym, lam_max_NtN,
                       alpha=None):
    """Scalar admissibility chain for ``(a, eta_bar, sigma, alpha, delta)``.

    ``lam_min_NtN_sum`` is the smallest eigenvalue of ``N' + N``. Each tunable
    is the midpoint of its interval. Returns ``TheoryInapplicable`` naming the
    first condition that fails.
    """
    vals = {"mu_bar": mu_bar, "L_bar": L_bar, "c1": c1, "c3": c3}
    lmin = lam_min_NtN_sum
    if not (mu_bar > 0 and L_bar > 0):
        return TheoryInapplicable("mu_bar > 0", "no strong convexity or no smooth part", vals)
    if lmin <= 0:
        return TheoryInapplicable("lambda_min(N'+N) > 0", "mixing fails positive definiteness", vals)

    c7 = lmin**2 / (4.0 * c3)
    a_lo = max((2.0 - c7) / (2.0 + c7), 0.0)
    a = 0.5 * (a_lo + 1.0)
    c8 = a * (c7 + 2.0) - (2.0 - c7)
    vals.update(c7=c7, a=a, c8=c8)
    if c8 <= 0:
        return TheoryInapplicable("a-interval", "c8 <= 0", vals)

    k = math.sqrt(6.0 * c1 / (1.0 - a**2))
    need = (k + math.sqrt((1.0 - a**2) / (6.0 * c1)) / c8) * L_bar
    vals["mu_bar_required"] = need
    if not mu_bar > need:
        return TheoryInapplicable(
            "mu-condition",
            f"mu_bar={mu_bar:.6g} must exceed {need:.6g}",
            vals,
        )

    disc = 1.0 - 4.0 * L_bar**2 / (c8 * mu_bar**2)
    if disc < 0:
        return TheoryInapplicable("eta-interval", "negative discriminant", vals)
    root = math.sqrt(disc)
    eta_lo = mu_bar * (1.0 - root)
    eta_hi = min(mu_bar * (1.0 + root), 2.0 * (mu_bar - k * L_bar))
    if not eta_lo < eta_hi:
        return TheoryInapplicable("eta-interval", f"empty ({eta_lo:.6g}, {eta_hi:.6g})", vals)
    eta = 0.5 * (eta_lo + eta_hi)

    D1 = (mu_bar - eta / 2.0) ** 2 - 6.0 * c1 * L_bar**2
    vals.update(eta_bar=eta, Delta1=D1)
    if D1 < 0:
        return TheoryInapplicable("Delta1 >= 0", f"Delta1={D1:.6g}", vals)
    c4 = (mu_bar - eta / 2.0) + math.sqrt(D1)
    c5 = L_bar**2 / eta
    c6 = (2.0 * c4 * c5 + 12.0 * c1 * L_bar**2) / c4**2
    D3 = lmin**2 - 4.0 * c3 * c6
    vals["Delta3"] = D3
    if D3 <= 0:
        return TheoryInapplicable("sigma-interval", f"Delta3={D3:.6g}", vals)
    sigma = lmin / (2.0 * c3)  # midpoint of (lmin -+ sqrt(D3)) / (2 c3)

    D2 = L_bar**4 / (4.0 * eta**2) - 3.0 * c1 * L_bar**2 * sigma * (c3 * sigma - lmin)
    vals.update(sigma=sigma, Delta2=D2)
    if D2 < 0:
        return TheoryInapplicable("Delta2 >= 0", f"Delta2={D2:.6g}", vals)
    denom = 3.0 * c1 * L_bar**2 * sigma
    alpha_lo = (mu_bar - eta / 2.0 - math.sqrt(D1)) / denom
    alpha_hi = min((mu_bar - eta / 2.0 + math.sqrt(D1)) / denom,
                   (-L_bar**2 / (2.0 * eta) + math.sqrt(D2)) / denom)
    vals.update(alpha_lo=alpha_lo, alpha_hi=alpha_hi)
    if not alpha_lo < alpha_hi:
        return TheoryInapplicable("alpha-interval", f"empty ({alpha_lo:.6g}, {alpha_hi:.6g})", vals)
    if alpha is None:
        alpha = 0.5 * (alpha_lo + alpha_hi)

    q = 1.5 * c1 * L_bar**2 * sigma * alpha**2
    d1 = (-1.0 / sigma + (mu_bar - eta / 2.0) * alpha - q) / (lam_max_N_sym + 3.0 * c2 * alpha**2 * L_bar**2)
    d2 = (lmin / 2.0 - c3 * sigma / 2.0 - L_bar**2 * alpha / (2.0 * eta) - q) / (
        3.0 * c2 * (lam_max_NtN + alpha**2 * L_bar**2)
    )
    return RateConstants(
        L_bar=L_bar, mu_bar=mu_bar, c1=c1, c2=c2, c3=c3, a=a, eta_bar=eta, sigma=sigma,
        alpha=alpha, delta=min(d1, d2), Delta1=D1, Delta2=D2, Delta3=D3,
        alpha_lo=alpha_lo, alpha_hi=alpha_hi,
        spectral={"lam_min_NtN_sum": lmin, "lam_max_N_sym": lam_max_N_sym,
                  "lam_max_NtN": lam_max_NtN},
    )


def theoretical_constants(mix, inst, diagnostics=None, alpha=None):
    """Rate-theorem constants for ``inst`` on ``mix``, or ``TheoryInapplicable``."""
    from .graph import mixing_diagnostics

    diag = mixing_diagnostics(mix) if diagnostics is None else diagnostics
    spec = spectral_inputs(mix)
    L_s = inst.lipschitz_max
    mu_s = inst.mu_estimate
    L_bar = diag.dinf_minus * diag.d_minus * L_s
    mu_bar = mu_s / (2.0 * diag.d_plus) ** 2
    return step_size_interval(
        mu_bar, L_bar, spec["c1"], spec["c2"], spec["c3"], spec["lam_min_NtN_sum"],
        spec["lam_max_N_sym"], spec["lam_max_NtN"], alpha=alpha,
    )


def trajectory_constants(alpha, delta, mu_s, L_s, diag, n, gamma, x_star_norm, z_star_norm,
                         calB, lam_min_N_sym, B_r, v0_dist_sq, C=4.0, rho=None):
    """``Gamma0``, ``B``, ``T*`` and ``Gamma`` for a given Lyapunov level ``calB``.

    ``B_r`` is the uniform subgradient bound; ``None`` (indicator terms) makes
    every ``B``-dependent constant unavailable and the result is ``None``.
    """
    if B_r is None:
        return None
    d_m = diag.d_minus
    B = max(math.sqrt(calB / lam_min_N_sym) + z_star_norm, B_r)
    C1 = 3.0 + 2.0 * alpha * (d_m * L_s + 1.0)
    C2 = mu_s * (n * C * gamma * x_star_norm / diag.d_plus) ** 2
    C3 = diag.dinf_minus * d_m * n * C * B * (
        d_m * L_s * (1.0 + gamma) * (C1 * B + z_star_norm) + 2.0 * C1 * B * gamma
    )
    Gamma0 = alpha * (C2 + C3)
    out = {"B": B, "C1": C1, "C2": C2, "C3": C3, "Gamma0": Gamma0}
    if 0 < gamma < 1 and delta > 0 and Gamma0 > 0:
        out["T_star"] = int(math.ceil(math.log(delta * calB / Gamma0) / math.log(gamma))) + 1
    else:
        out["T_star"] = None
    if rho is None:
        rho = max(gamma, 1.0 / (1.0 + delta)) if delta > 0 else None
    if rho is not None and rho < 1 and gamma < rho:
        tau = 0.5 * (gamma + rho)
        ratio = rho / tau
        xi = 2.0 / (ratio * math.log(ratio))
        out["Gamma"] = d_m * (
            math.sqrt((v0_dist_sq + Gamma0 * xi) / lam_min_N_sym) + n * C * x_star_norm
        )
    else:
        out["Gamma"] = None
    return out


def bounded_iterate_check(z_trace, B, alpha, d_minus, L_s):
    """Round-over-round growth bound ``|z^{t+1}| <= C1 B`` along a trace.

    Returns ``(ok, first_violation)`` with ``first_violation`` the trace index
    of the first offending round, or ``None``.
    """
    C1 = 3.0 + 2.0 * alpha * (d_minus * L_s + 1.0)
    cap = C1 * B
    for k, z in enumerate(z_trace):
        if not np.all(np.isfinite(z)) or float(np.linalg.norm(z)) > cap:
            return False, k
    return True, None


def increment_bound_gaps(x_trace, z_trace, d_minus, n, gamma, B, C=4.0, t0=1):
    """Slack ``rhs - lhs`` of ``|x^{t+1}-x^t| <= d- |z^{t+1}-z^t| + (d-)^2 n C B (1+gamma) gamma^t``."""
    gaps = []
    for k in range(len(x_trace) - 1):
        t = t0 + k
        lhs = float(np.linalg.norm(x_trace[k + 1] - x_trace[k]))
        rhs = d_minus * float(np.linalg.norm(z_trace[k + 1] - z_trace[k])) + (
            d_minus**2 * n * C * B * (1.0 + gamma) * gamma**t
        )
        gaps.append(rhs - lhs)
    return gaps


# ---------------------------------------------------------------- rate fitting


@dataclass(frozen=True)
class RateFit:
    rho_hat: float
    onset_t: int
    r_squared: float
    slope: float


def _lsq(t, y):
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def rate_fit(trace, window=0.6, floor=1e-14, min_records=50, local=None, rel_tol=0.1):
    """Fit ``dist ~ (sqrt(rho))^t`` on the trailing part of a trace.

    ``trace`` is a list of ``TraceRecord`` or a pair ``(t, dist)``. Records at
    or below ``floor`` are dropped. ``onset_t`` is the first round after which
    every local slope (over ``local`` consecutive records) stays within
    ``rel_tol`` of the fitted slope.
    """
    if isinstance(trace, tuple):
        t, d = (np.asarray(v, dtype=np.float64) for v in trace)
    else:
        t = np.array([r.t for r in trace], dtype=np.float64)
        d = np.array([r.dist_to_ref for r in trace], dtype=np.float64)
    keep = np.isfinite(d) & (d > floor)
    t, d = t[keep], d[keep]
    if t.size < min_records:
        raise TraceTooShort(f"{t.size} usable records, need {min_records}")
    y = np.log(d)
    start = int(math.floor((1.0 - window) * t.size))
    slope, r2 = _lsq(t[start:], y[start:])
    rho = math.exp(2.0 * slope)

    width = local or max(5, t.size // 20)
    onset = int(t[-1])
    ok_after = True
    for k in range(t.size - width, -1, -1):
        s, _ = _lsq(t[k:k + width], y[k:k + width])
        good = abs(s - slope) <= rel_tol * abs(slope) if slope != 0 else abs(s) < 1e-12
        ok_after = ok_after and good
        if ok_after:
            onset = int(t[k])
        else:
            break
    return RateFit(rho_hat=rho, onset_t=onset, r_squared=r2, slope=slope)
