import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diropt.analysis import (
    RateConstants,
    TheoryInapplicable,
    bounded_iterate_check,
    build_lyapunov,
    error_vector,
    g_norm_sq,
    increment_bound_gaps,
    lyapunov_matrices,
    lyapunov_monitor,
    optimal_triple,
    optimality_residual,
    rate_fit,
    smallest_nonzero_eig,
    spectral_inputs,
    step_size_interval,
    theoretical_constants,
    trajectory_constants,
    update_identity_residual,
)
from diropt.errors import NonFiniteIterate, SingularSystem, TraceTooShort
from diropt.graph import (
    DirectedNetwork,
    MixingMatrix,
    build_mixing_matrix,
    five_node_network,
    metropolis_matrix,
    mixing_diagnostics,
    random_network,
    ring_network,
)
from diropt.problems import (
    least_squares_from_data,
    make_geometric_median,
    make_l1_least_squares,
    make_qp,
)
from diropt.solvers import RunConfig, iterate, seed_at_optimum

# Eigenvalues of G + G' for the five-node example, from a dense symmetric eigensolver.
FIVE_NODE_GSYM_EIGS = np.array([
    0.0, 0.39458473837016483, 0.58100464064308499, 0.67834034668237853, 1.1714509142366469,
    1.2355388769496554, 1.3284100513035790, 1.5799288951406569, 2.0253788144853635,
    3.4379024047281499,
])

# Synthetic spectral inputs where every premise of the rate theorem holds.
SYNTH = dict(mu_bar=100.0, L_bar=1.0, c1=0.5, c2=0.5, c3=1.0, lam_min_NtN_sum=1.8,
             lam_max_N_sym=1.0, lam_max_NtN=1.0)


def instances():
    return [
        make_l1_least_squares(5, 8, 10, 0.5, seed=0),
        make_geometric_median(5, 6, seed=0),
        make_qp(5, 6, seed=0),
    ]


@pytest.fixture
def mix5():
    net, _ = random_network(5, 0.5, seed=0)
    return build_mixing_matrix(net)


class TestCertificate:
    @pytest.mark.parametrize("inst", instances(), ids=lambda i: i.family)
    def test_seeded_triple(self, inst, mix5):
        alpha = 0.01
        tri = optimal_triple(inst, mix5, alpha)
        state = seed_at_optimum(tri, inst, mix5, alpha)
        cert = optimality_residual(state, inst, mix5, alpha)
        assert cert.max < 1e-8
        np.testing.assert_allclose(tri.y.sum(axis=0), 0.0, atol=1e-8)

    def test_smooth_case(self, mix5):
        inst = make_l1_least_squares(5, 4, 6, 0.0, seed=1).with_prox_removed()
        st = None
        for st in iterate(inst, mix5, RunConfig("extrapush", alpha=0.005, max_iter=3)):
            pass
        cert = optimality_residual(st, inst, mix5, 0.005)
        assert cert.stationarity_residual == pytest.approx(np.linalg.norm(inst.grad(st.x).sum(axis=0)))

    def test_decreases_along_run(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        vals = [optimality_residual(s, inst, mix5, 0.005).max
                for s in iterate(inst, mix5, RunConfig(alpha=0.005, max_iter=600))]
        assert vals[0] > 1.0 and vals[-1] < 1e-5


class TestLyapunov:
    def test_five_node_eigs(self):
        mix = build_mixing_matrix(five_node_network())
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        lyap = build_lyapunov(mix, optimal_triple(inst, mix, 0.005))
        np.testing.assert_allclose(lyap.sym_eigs, FIVE_NODE_GSYM_EIGS, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_psd_and_nullspace(self, seed):
        net, _ = random_network(6, 0.4, seed=seed)
        mix = build_mixing_matrix(net)
        inst = make_l1_least_squares(6, 4, 6, 0.3, seed=seed)
        tri = optimal_triple(inst, mix, 0.01)
        lyap = build_lyapunov(mix, tri)
        assert np.linalg.eigvalsh(lyap.M + lyap.M.T)[0] >= -1e-12
        assert lyap.sym_eigs[0] >= -1e-12
        np.testing.assert_allclose(lyap.M @ tri.z, 0.0, atol=1e-12)
        np.testing.assert_allclose(lyap.M.T @ tri.z, 0.0, atol=1e-12)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            v = rng.standard_normal((12, 4))
            assert g_norm_sq(v, lyap.G) >= -1e-12
            assert g_norm_sq(v, lyap.G) == pytest.approx(0.5 * g_norm_sq(v, lyap.G + lyap.G.T))

    def test_undirected_symmetry(self):
        ring = ring_network(6)
        both = DirectedNetwork(6, ring.edges | {(j, i) for i, j in ring.edges})
        mix = MixingMatrix.from_matrix(metropolis_matrix(both))
        _, M, _, S = lyapunov_matrices(mix)
        np.testing.assert_allclose(M, M.T, atol=1e-15)
        np.testing.assert_allclose(S, -S.T, atol=1e-15)

    def test_ustar_solves(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        tri = optimal_triple(inst, mix5, 0.005)
        lyap = build_lyapunov(mix5, tri)
        np.testing.assert_allclose((mix5.Abar - mix5.A) @ lyap.ustar, tri.y, atol=1e-10)
        # minimum norm: orthogonal to the null space of Abar - A, spanned by phi
        np.testing.assert_allclose(mix5.phi @ lyap.ustar, 0.0, atol=1e-10)

    def test_inconsistent_y(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        tri = optimal_triple(inst, mix5, 0.005)
        tri.y = tri.y + 1.0  # columns no longer sum to zero
        with pytest.raises(SingularSystem):
            build_lyapunov(mix5, tri)

    @pytest.mark.parametrize("inst", instances()[:2], ids=lambda i: i.family)
    def test_update_identity(self, inst, mix5):
        alpha = 0.005 if inst.family == "l1_ls" else 0.5
        algo = "pg_extrapush" if inst.family == "l1_ls" else "p_extrapush"
        z0 = inst.data["b"].copy() if inst.family == "geometric_median" else None
        lyap = build_lyapunov(mix5, optimal_triple(inst, mix5, alpha))
        prev = None
        for s in iterate(inst, mix5, RunConfig(algo, alpha=alpha, max_iter=10, z0=z0)):
            if prev is not None:
                e = error_vector(mix5, prev.grad, (s.z_half - s.z) / alpha)
                r = update_identity_residual(lyap, np.vstack([prev.z, prev.u]),
                                             np.vstack([s.z, s.u]), e, alpha)
                assert r < 1e-9
            prev = s


class TestMonitor:
    def test_fixed_point_run(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        alpha = 0.005
        tri = optimal_triple(inst, mix5, alpha)
        lyap = build_lyapunov(mix5, tri)
        state = seed_at_optimum(tri, inst, mix5, alpha)
        state.u = tri.u.copy()
        vs = [np.vstack([s.z, s.u]) for s in iterate(inst, mix5, RunConfig(alpha=alpha, max_iter=20),
                                                     state=state)]
        # u drifts by z* each round, so compare against the moving target
        vstars = [np.vstack([tri.z, tri.u + k * tri.z]) for k in range(len(vs))]
        viol = [lyapunov_monitor([vs[k], vs[k + 1] - vstars[k + 1] + vstars[k]], vstars[k],
                                 lyap.G, 0.5, 0.0, 0.5)[0] for k in range(len(vs) - 1)]
        assert max(viol) <= 1e-20

    def test_arithmetic(self):
        G = np.eye(1)
        vs = [np.array([[2.0]]), np.array([[1.0]]), np.array([[0.5]])]
        out = lyapunov_monitor(vs, np.zeros((1, 1)), G, delta=1.0, Gamma0=0.5, gamma=0.5)
        assert out == pytest.approx([2 * 1 - 0.5 - 4, 2 * 0.25 - 0.25 - 1])

    def test_negative_control(self):
        G = np.eye(1)
        vs = [np.array([[0.9**t]]) for t in range(30)]
        ok = lyapunov_monitor(vs, np.zeros((1, 1)), G, delta=0.2, Gamma0=0.0, gamma=0.5)
        bad = lyapunov_monitor(vs, np.zeros((1, 1)), G, delta=1.0, Gamma0=0.0, gamma=0.5)
        assert max(ok) <= 0 and max(bad) > 0


class TestRateConstants:
    def test_synthetic_admissible(self):
        rc = step_size_interval(**SYNTH)
        assert isinstance(rc, RateConstants) and rc.admissible
        assert rc.alpha_lo < rc.alpha < rc.alpha_hi and rc.delta > 0
        # frozen from direct evaluation of the scalar chain
        assert rc.alpha_lo == pytest.approx(0.021696276481493356, rel=1e-12)
        assert rc.alpha_hi == pytest.approx(0.8127085524106918, rel=1e-12)
        assert rc.delta == pytest.approx(0.18759579234026524, rel=1e-12)

    def test_synthetic_conditions(self):
        rc = step_size_interval(**SYNTH)
        lmin, c1, c3, L, mu = 1.8, 0.5, 1.0, 1.0, 100.0
        c7 = lmin**2 / (4 * c3)
        assert max((2 - c7) / (2 + c7), 0) < rc.a < 1
        c8 = rc.a * (c7 + 2) - (2 - c7)
        assert mu > (math.sqrt(6 * c1 / (1 - rc.a**2)) + math.sqrt((1 - rc.a**2) / (6 * c1)) / c8) * L
        assert rc.Delta1 >= 0 and rc.Delta2 >= 0 and rc.Delta3 > 0
        assert rc.Delta1 == pytest.approx((mu - rc.eta_bar / 2) ** 2 - 6 * c1 * L**2)

    def test_explicit_alpha_outside(self):
        rc = step_size_interval(**SYNTH, alpha=1e-6)
        assert rc.delta < 0

    @settings(max_examples=20, deadline=None)
    @given(scale=st.floats(0.1, 10.0), c1=st.floats(0.2, 1.0), lmin=st.floats(1.0, 2.0))
    def test_alpha_hi_inverse_lipschitz(self, scale, c1, lmin):
        kw = dict(SYNTH, L_bar=scale, mu_bar=100.0 * scale, c1=c1, lam_min_NtN_sum=lmin)
        rc = step_size_interval(**kw)
        if not rc.admissible:
            return
        bound = math.sqrt((lmin - kw["c3"] * rc.sigma) / (3 * c1 * rc.sigma)) / scale
        assert rc.alpha_hi <= bound * (1 + 1e-12)

    def test_zero_mu(self):
        mix = build_mixing_matrix(five_node_network())
        out = theoretical_constants(mix, make_geometric_median(5, 4, seed=0))
        assert isinstance(out, TheoryInapplicable) and not out.admissible
        assert out.condition == "mu_bar > 0"

    def test_quadratic_instance_fails_premise(self):
        mix = build_mixing_matrix(five_node_network())
        inst = make_l1_least_squares(5, 4, 40, 0.1, seed=0)
        out = theoretical_constants(mix, inst)
        assert isinstance(out, TheoryInapplicable)
        assert out.condition == "mu-condition"
        assert out.values["mu_bar"] < out.values["mu_bar_required"]

    def test_spectral_inputs_finite(self):
        for seed in range(10):
            net, _ = random_network(int(3 + seed % 5), 0.5, seed=seed)
            spec = spectral_inputs(build_mixing_matrix(net))
            assert all(np.isfinite(v) for v in spec.values())
            assert spec["c1"] > 0 and spec["c2"] > 0

    def test_smallest_nonzero(self):
        assert smallest_nonzero_eig(np.diag([0.0, 1e-12, 0.5, 2.0])) == 0.5
        with pytest.raises(SingularSystem):
            smallest_nonzero_eig(np.zeros((2, 2)))

    def test_trajectory_constants(self):
        diag = mixing_diagnostics(build_mixing_matrix(five_node_network()))
        args = dict(alpha=0.01, delta=0.1, mu_s=1.0, L_s=2.0, diag=diag, n=5, gamma=0.9,
                    x_star_norm=1.0, z_star_norm=2.0, calB=3.0, lam_min_N_sym=0.3, v0_dist_sq=1.0)
        assert trajectory_constants(**args, B_r=None) is None
        out = trajectory_constants(**args, B_r=1.0)
        assert out["Gamma0"] > 0 and out["B"] >= 1.0
        assert out["C1"] == pytest.approx(3 + 2 * 0.01 * (diag.d_minus * 2 + 1))


class TestRateFit:
    def test_geometric(self):
        t = np.arange(100)
        fit = rate_fit((t, 2.0 ** -t.astype(float)), floor=0)
        assert fit.rho_hat == pytest.approx(0.25, rel=1e-12)
        assert fit.onset_t == 0
        assert fit.r_squared == pytest.approx(1.0)

    def test_eventual(self):
        t = np.arange(300, dtype=float)
        d = np.where(t < 60, 1.0 / (1.0 + t), (1.0 / 61) * 0.9 ** (t - 60))
        fit = rate_fit((t, d))
        assert fit.rho_hat == pytest.approx(0.81, rel=1e-9)
        assert 40 <= fit.onset_t <= 80

    def test_too_short(self):
        with pytest.raises(TraceTooShort):
            rate_fit((np.arange(20), np.ones(20)))
        t = np.arange(100)
        with pytest.raises(TraceTooShort):
            rate_fit((t, np.where(t < 10, 1.0, 0.0)))


class TestBounds:
    def _run(self, inst, mix, alpha, rounds):
        zs, xs = [], []
        try:
            for s in iterate(inst, mix, RunConfig(alpha=alpha, max_iter=rounds)):
                zs.append(s.z)
                xs.append(s.x)
        except NonFiniteIterate:
            zs.append(np.full_like(zs[-1], np.inf))
        return zs, xs

    def test_fixed_point_bounded(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        tri = optimal_triple(inst, mix5, 0.005)
        zs = [s.z for s in iterate(inst, mix5, RunConfig(alpha=0.005, max_iter=30),
                                   state=seed_at_optimum(tri, inst, mix5, 0.005))]
        B = np.linalg.norm(tri.z)
        ok, first = bounded_iterate_check(zs, B, 0.005, 1.0, inst.lipschitz_max)
        assert ok and first is None

    def test_l1_bounded_and_divergent(self, mix5):
        inst = make_l1_least_squares(5, 8, 10, 0.5, seed=0)
        diag = mixing_diagnostics(mix5)
        tri = optimal_triple(inst, mix5, 0.005)
        zs, _ = self._run(inst, mix5, 0.005, 300)
        B = max(np.linalg.norm(zs[0]), np.linalg.norm(tri.z), inst.agents[0].prox.subgradient_bound(8))
        ok, _ = bounded_iterate_check(zs, B, 0.005, diag.d_minus, inst.lipschitz_max)
        assert ok
        zs, _ = self._run(inst, mix5, 2.0, 300)
        ok, first = bounded_iterate_check(zs, B, 2.0, diag.d_minus, inst.lipschitz_max)
        assert not ok and 0 < first < len(zs)

    @pytest.mark.parametrize("inst", instances()[:1] + [make_qp(5, 6, seed=0)], ids=lambda i: i.family)
    def test_increment_bound_gaps(self, inst, mix5):
        diag = mixing_diagnostics(mix5)
        zs, xs = self._run(inst, mix5, 0.005, 10)
        B = max(np.linalg.norm(z) for z in zs)
        gaps = increment_bound_gaps(xs, zs, diag.d_minus, 5, mix5.gamma_bound, B)
        assert len(gaps) == 10 and min(gaps) >= 0


def test_argmin_invariance():
    base = make_l1_least_squares(4, 6, 8, 0.5, seed=3)
    c = 4.0
    B, b = base.data["B"], base.data["b"]
    scaled = least_squares_from_data(math.sqrt(c) * B, math.sqrt(c) * b, 0.5 * c)
    np.testing.assert_allclose(scaled.reference.x, base.reference.x, atol=1e-8)
    net, _ = random_network(4, 0.5, seed=3)
    mix = build_mixing_matrix(net)
    a = list(iterate(base, mix, RunConfig(alpha=0.004, max_iter=100)))
    s = list(iterate(scaled, mix, RunConfig(alpha=0.004 / c, max_iter=100)))
    for u, v in zip(a, s):
        np.testing.assert_allclose(u.x, v.x, atol=1e-10)
