import numpy as np
import pytest

from sepcov.errors import ConfigError
from sepcov.geometry import SpdMatrix, geodesic_step
from sepcov.kron import duplication, kron, vec, vech
from sepcov.metrics import (MetricKind, TangentPair, build_metric_tensor, kinetic_energy,
                            metric_grad_logdet, metric_inner, metric_logdet,
                            project_tangent, pullback_metric_tensor, riemannian_grad,
                            sample_velocity)
from sepcov.model import SeparableState, normalize_component

from conftest import fd_gradient, grad_close, random_spd, random_state, random_symm

ALL_KINDS = [MetricKind.regularized(0.95), MetricKind.orthogonalized(),
             MetricKind.weighted(0.5), MetricKind.product()]


def stacked_vech(pair: TangentPair) -> np.ndarray:
    return np.concatenate([vech(pair.v1), vech(pair.v2)])


class TestMetricKind:
    def test_validation(self):
        with pytest.raises(ConfigError):
            MetricKind.regularized(1.0)
        with pytest.raises(ConfigError):
            MetricKind.weighted(0.0)

    def test_weights_table(self):
        assert MetricKind.regularized(0.5).weights(3, 7) == (7.0, 3.0)
        assert MetricKind.orthogonalized().weights(3, 7) == (7.0, 3.0)
        w1, w2 = MetricKind.weighted(0.5).weights(3, 7)
        assert np.isclose(w1, 0.5 * 7 + 0.5)
        assert np.isclose(w2, 0.5 * 3 + 0.5)
        assert MetricKind.product().weights(3, 7) == (1.0, 1.0)

    def test_constraint_flags(self):
        assert not MetricKind.regularized(0.9).constrained
        assert MetricKind.orthogonalized().constrained
        assert MetricKind.weighted(0.3).constrained
        assert not MetricKind.product().constrained


class TestProjectTangent:
    def test_scale_direction_removed(self, rng):
        s2 = random_spd(3, rng)
        assert np.allclose(project_tangent(s2, s2.m.copy()), 0.0, atol=1e-12)

    def test_fixed_point(self, rng):
        s2 = random_spd(3, rng)
        v = random_symm(3, rng)
        v0 = project_tangent(s2, v)
        assert np.allclose(project_tangent(s2, v0), v0, atol=1e-12)

    def test_trace_zero_postcondition(self, rng):
        s2 = random_spd(4, rng)
        for _ in range(5):
            v = project_tangent(s2, random_symm(4, rng))
            assert abs(np.trace(s2.solve(v))) < 1e-9 * max(np.linalg.norm(v), 1.0)


class TestKineticEnergy:
    def test_zero_velocity(self, rng):
        state = random_state(2, 3, rng)
        z = TangentPair(np.zeros((2, 2)), np.zeros((3, 3)))
        for kind in ALL_KINDS:
            assert kinetic_energy(kind, state, z) == 0.0

    def test_product_identity_state(self, rng):
        state = SeparableState(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(3)))
        v = TangentPair(random_symm(2, rng), random_symm(3, rng))
        expected = 0.5 * ((v.v1 * v.v1).sum() + (v.v2 * v.v2).sum())
        assert np.isclose(kinetic_energy(MetricKind.product(), state, v), expected)

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.kind)
    def test_matches_dense_quadratic_form(self, kind, rng):
        state = random_state(2, 3, rng)
        v = TangentPair(random_symm(2, rng), random_symm(3, rng))
        if kind.constrained:
            state = normalize_component(state)
            v = TangentPair(v.v1, project_tangent(state.sigma2, v.v2))
        g_hat = build_metric_tensor(kind, state)
        v_hat = stacked_vech(v)
        assert np.isclose(kinetic_energy(kind, state, v), 0.5 * v_hat @ g_hat @ v_hat,
                          rtol=1e-10)


class TestSampleVelocity:
    def test_constraint_satisfied(self, rng):
        state = normalize_component(random_state(2, 3, rng))
        for kind in (MetricKind.orthogonalized(), MetricKind.weighted(0.7)):
            for _ in range(10):
                v = sample_velocity(kind, state, rng)
                assert abs(np.trace(state.sigma2.solve(v.v2))) < 1e-9

    def test_product_identity_variances(self):
        rng = np.random.default_rng(11)
        state = SeparableState(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(2)))
        kind = MetricKind.product()
        draws = np.array([sample_velocity(kind, state, rng).v1 for _ in range(100_000)])
        var = draws.var(axis=0)
        assert abs(var[0, 0] - 1.0) < 0.05
        assert abs(var[1, 1] - 1.0) < 0.05
        assert abs(var[0, 1] - 0.5) < 0.05 * 0.5

    def test_regularized_covariance_matches_inverse_tensor(self):
        rng = np.random.default_rng(12)
        state = random_state(2, 2, rng)
        kind = MetricKind.regularized(0.9)
        g_hat = build_metric_tensor(kind, state)
        target = np.linalg.inv(g_hat)
        draws = np.array([stacked_vech(sample_velocity(kind, state, rng))
                          for _ in range(100_000)])
        emp = np.cov(draws.T, bias=True)
        assert np.abs(emp - target).max() < 0.05 * np.abs(target).max()

    def test_diagonal_kind_covariance_matches_inverse_tensor(self):
        # same Monte-Carlo oracle for the fast path
        rng = np.random.default_rng(13)
        state = normalize_component(random_state(2, 2, rng))
        kind = MetricKind.orthogonalized()
        g_hat = build_metric_tensor(kind, state)
        m1 = 3
        draws = np.array([stacked_vech(sample_velocity(kind, state, rng))
                          for _ in range(100_000)])
        emp = np.cov(draws.T, bias=True)
        # unconstrained first block matches the inverse of its tensor block
        target1 = np.linalg.inv(g_hat[:m1, :m1])
        assert np.abs(emp[:m1, :m1] - target1).max() < 0.05 * np.abs(target1).max()


class TestRiemannianGrad:
    def test_product_identity_state_is_identity_map(self, rng):
        state = SeparableState(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(3)))
        e = (random_symm(2, rng), random_symm(3, rng))
        out = riemannian_grad(MetricKind.product(), state, e)
        assert np.allclose(out.v1, e[0])
        assert np.allclose(out.v2, e[1])

    def test_regularized_solves_dense_system(self, rng):
        state = random_state(2, 3, rng)
        kind = MetricKind.regularized(0.95)
        e = (random_symm(2, rng), random_symm(3, rng))
        out = riemannian_grad(kind, state, e)
        g_hat = build_metric_tensor(kind, state)
        rhs = np.concatenate([duplication(2).dup.T @ vec(e[0]),
                              duplication(3).dup.T @ vec(e[1])])
        x = np.linalg.solve(g_hat, rhs)
        assert np.allclose(stacked_vech(out), x, rtol=1e-9, atol=1e-12)

    def test_orthogonalized_matches_constrained_dense_solve(self, rng):
        state = normalize_component(random_state(2, 3, rng))
        kind = MetricKind.orthogonalized()
        e = (random_symm(2, rng), random_symm(3, rng))
        out = riemannian_grad(kind, state, e)
        g_hat = build_metric_tensor(kind, state)
        m = g_hat.shape[0]
        rhs = np.concatenate([duplication(2).dup.T @ vec(e[0]),
                              duplication(3).dup.T @ vec(e[1])])
        # KKT system restricting the solve to the constraint-tangent subspace
        con = np.concatenate([np.zeros(3), duplication(3).dup.T @ vec(state.sigma2.inv())])
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = g_hat
        kkt[:m, m] = con
        kkt[m, :m] = con
        sol = np.linalg.solve(kkt, np.concatenate([rhs, [0.0]]))[:m]
        rel = np.abs(stacked_vech(out) - sol).max() / max(np.abs(sol).max(), 1e-12)
        assert rel < 1e-9

    def test_weighted_limit_matches_orthogonalized_block(self, rng):
        state = normalize_component(random_state(3, 2, rng))
        e = (random_symm(3, rng), random_symm(2, rng))
        near_one = riemannian_grad(MetricKind.weighted(1 - 1e-9), state, e)
        orth = riemannian_grad(MetricKind.orthogonalized(), state, e)
        assert np.allclose(near_one.v1, orth.v1, rtol=1e-6)

    def test_fast_dense_agreement_all_kinds(self, rng):
        # dense tensor solve (with constraint handling) vs the fast path
        for kind in ALL_KINDS:
            state = random_state(2, 3, rng)
            if kind.constrained:
                state = normalize_component(state)
            e = (random_symm(2, rng), random_symm(3, rng))
            out = riemannian_grad(kind, state, e)
            g_hat = build_metric_tensor(kind, state)
            rhs = np.concatenate([duplication(2).dup.T @ vec(e[0]),
                                  duplication(3).dup.T @ vec(e[1])])
            if kind.constrained:
                m = g_hat.shape[0]
                con = np.concatenate([np.zeros(3),
                                      duplication(3).dup.T @ vec(state.sigma2.inv())])
                kkt = np.zeros((m + 1, m + 1))
                kkt[:m, :m] = g_hat
                kkt[:m, m] = con
                kkt[m, :m] = con
                x = np.linalg.solve(kkt, np.concatenate([rhs, [0.0]]))[:m]
            else:
                x = np.linalg.solve(g_hat, rhs)
            rel = np.abs(stacked_vech(out) - x).max() / max(np.abs(x).max(), 1e-12)
            assert rel < 1e-9, kind.kind


class TestDenseTensor:
    def test_degenerate_at_alpha_one(self, rng):
        for d1, d2 in [(2, 2), (2, 3)]:
            state = random_state(d1, d2, rng)
            g = pullback_metric_tensor(state, alpha=1.0)
            lams = np.linalg.eigvalsh(g)
            assert abs(np.linalg.det(g)) < 1e-8 * max(np.abs(lams).max(), 1.0) ** g.shape[0]
            assert lams[0] < 1e-10 * lams[-1]  # a numerically zero eigenvalue

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 0.9, 0.95])
    def test_positive_definite_below_one(self, alpha):
        rng = np.random.default_rng(14)
        for _ in range(20):
            state = random_state(2, 3, rng)
            g = pullback_metric_tensor(state, alpha=alpha)
            assert np.linalg.eigvalsh(g)[0] > 0

    def test_product_identity_is_duplication_gram(self):
        state = SeparableState(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(3)))
        g = build_metric_tensor(MetricKind.product(), state)
        d1, d2 = duplication(2).dup, duplication(3).dup
        expected = np.zeros_like(g)
        expected[:3, :3] = d1.T @ d1
        expected[3:, 3:] = d2.T @ d2
        assert np.allclose(g, expected)

    def test_sampling_covariance_is_inverse_kinetic_matrix(self, rng):
        # the pseudo-inverse-congruence form of the inverse tensor coincides
        # with the plain inverse of the vech-congruence tensor for all kinds
        state = random_state(2, 3, rng)
        dup1, dup2 = duplication(2), duplication(3)
        for kind in ALL_KINDS:
            g_hat = build_metric_tensor(kind, state)
            inv1, inv2 = state.sigma1.inv(), state.sigma2.inv()
            w1, w2 = kind.weights(2, 3)
            g_vec = np.zeros((4 + 9, 4 + 9))
            g_vec[:4, :4] = w1 * kron(inv1, inv1, cap=None)
            g_vec[4:, 4:] = w2 * kron(inv2, inv2, cap=None)
            if kind.cross:
                off = kind.cross * np.outer(vec(inv1), vec(inv2))
                g_vec[:4, 4:] = off
                g_vec[4:, :4] = off.T
            dplus = np.zeros((9, 13))
            dplus[:3, :4] = dup1.dup_pinv
            dplus[3:, 4:] = dup2.dup_pinv
            lhs = np.linalg.inv(g_hat)
            rhs = dplus @ np.linalg.inv(g_vec) @ dplus.T
            assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-12), kind.kind


class TestMetricLogdet:
    def test_identity_state_zero(self):
        state = SeparableState(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(3)))
        for kind in ALL_KINDS:
            assert metric_logdet(kind, state) == 0.0

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.kind)
    def test_differences_match_dense_determinant(self, kind, rng):
        sa = random_state(2, 2, rng)
        sb = random_state(2, 2, rng)
        if kind.constrained:
            sa, sb = normalize_component(sa), normalize_component(sb)
        lhs = metric_logdet(kind, sa) - metric_logdet(kind, sb)
        rhs = (np.linalg.slogdet(build_metric_tensor(kind, sa))[1]
               - np.linalg.slogdet(build_metric_tensor(kind, sb))[1])
        assert np.isclose(lhs, rhs, rtol=1e-6, atol=1e-8)

    def test_orthogonalized_independent_of_sigma2(self, rng):
        s1 = random_spd(2, rng)
        kind = MetricKind.orthogonalized()
        a = SeparableState(s1, random_spd(3, rng))
        b = SeparableState(s1, random_spd(3, rng))
        assert metric_logdet(kind, a) == metric_logdet(kind, b)

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.kind)
    def test_grad_fd(self, kind, rng):
        state = random_state(3, 2, rng)
        g1, g2 = metric_grad_logdet(kind, state)
        fd1 = fd_gradient(lambda m: metric_logdet(kind, SeparableState(SpdMatrix(m), state.sigma2)),
                          state.sigma1.m)
        grad_close(g1, fd1, 1e-6)
        if kind.constrained:
            assert np.all(g2 == 0.0)
        else:
            fd2 = fd_gradient(
                lambda m: metric_logdet(kind, SeparableState(state.sigma1, SpdMatrix(m))),
                state.sigma2.m)
            grad_close(g2, fd2, 1e-6)

    def test_scalar_factor_gradient(self):
        state = SeparableState(SpdMatrix([[0.5]]), SpdMatrix(np.eye(2)))
        g1, _ = metric_grad_logdet(MetricKind.product(), state)
        assert np.isclose(g1[0, 0], -2.0 / 0.5)


class TestConstraintPreservation:
    def test_unit_determinant_preserved_along_geodesic(self, rng):
        state = normalize_component(random_state(2, 3, rng))
        v2 = project_tangent(state.sigma2, random_symm(3, rng))
        for t in (0.1, 0.5, 1.0):
            st = geodesic_step(state.sigma2, v2, t)
            assert abs(st.logdet()) < 1e-10
