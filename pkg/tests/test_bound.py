import numpy as np
import pytest
from scipy.special import logsumexp

from gdclassify import bound
from gdclassify.errors import OutOfRange, SingularBlock
from gdclassify.simplex import v_inverse, v_transform


def random_theta(rng, D, M):
    a = np.exp(rng.uniform(-1, 3, D))
    b = np.exp(rng.uniform(-1, 3, D))
    alphas = rng.dirichlet(np.ones(M))
    return bound.natural_params(a, b, alphas)


def random_mixture(rng, D, M, spread=(-1.0, 4.0)):
    a = np.exp(rng.uniform(*spread, (M, D)))
    b = np.exp(rng.uniform(*spread, (M, D)))
    return a, b, rng.dirichlet(np.ones(M))


def random_points(rng, n, D, scale=1.0):
    V = np.clip(scale * rng.beta(0.7, 0.7, (n, D)), 1e-6 * scale, scale * (1 - 1e-6))
    return v_inverse(V, scale)


class TestCumulant:
    def test_trivial_value(self):
        theta = bound.natural_params([1.0], [1.0], [0.5, 0.5])
        assert bound.cumulant(theta, 1) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_scale_term_vanishes_at_one(self):
        rng = np.random.default_rng(0)
        theta = random_theta(rng, 3, 2)
        shifted = bound.cumulant(theta, 3, scale=np.e) - bound.cumulant(theta, 3, scale=1.0)
        a, b, _ = bound.split_params(theta, 3)
        assert shifted == pytest.approx(np.sum(a + b - 1.0), rel=1e-12)

    def test_exponential_family_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            D, M = int(rng.integers(1, 5)), int(rng.integers(2, 5))
            scale = float(rng.choice([1.0, 4.0]))
            a, b, alphas = random_mixture(rng, D, M, (-1.0, 2.5))
            X = random_points(rng, 4, D, scale)
            lv, lw, lj = bound.stick_logs(X, scale)
            terms = bound.mixture_identity_terms(lv, lw, a, b, alphas, scale)
            rebuilt = logsumexp(terms, axis=1) - (lv + lw).sum(axis=1) + lj
            direct = bound.log_mixture(lv, lw, lj, a, b, alphas, scale)
            np.testing.assert_allclose(rebuilt, direct, atol=1e-8, rtol=1e-10)
            # the per-component form matches the vector helpers too
            k = int(rng.integers(M))
            theta = np.concatenate([np.column_stack([a[k], b[k]]).ravel(),
                                    np.log(alphas[:-1]) - np.log(alphas[-1])])
            xbar = bound.sufficient_stats(v_transform(X[0], scale), k, M, scale)
            assert xbar @ theta - bound.cumulant(theta, D, scale) == pytest.approx(terms[0, k], abs=1e-9)


def _fd_grad(f, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestDerivatives:
    def test_gradient_matches_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            D, M = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            scale = float(rng.choice([1.0, 2.0]))
            theta = random_theta(rng, D, M)
            fd = _fd_grad(lambda t: bound.cumulant(t, D, scale), theta, 1e-5)
            an = bound.cumulant_grad(theta, D, scale)
            assert np.max(np.abs(an - fd) / np.maximum(np.abs(an), 1e-3)) < 1e-5

    def test_symmetric_shapes(self):
        g = bound.cumulant_grad(bound.natural_params([2.5, 0.7], [2.5, 0.7], [0.5, 0.5]), 2)
        assert g[0] == g[1] and g[2] == g[3]

    def test_uniform_softmax(self):
        assert bound.cumulant_grad(bound.natural_params([1.0], [2.0], [0.5, 0.5]), 1)[-1] == 0.5

    def test_hessian_matches_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            D, M = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            theta = random_theta(rng, D, M)
            dense = bound.cumulant_hess(theta, D).dense()
            P = theta.size
            fd = np.column_stack([
                _fd_grad(lambda t, i=i: bound.cumulant_grad(t, D)[i], theta, 1e-5) for i in range(P)])
            err = np.abs(dense - fd) / np.maximum(np.abs(dense), 1e-2)
            assert err.max() < 1e-4

    def test_beta_blocks_positive_definite(self):
        rng = np.random.default_rng(4)
        a, b = np.exp(rng.uniform(-3, 6, (2, 500)))
        eig = np.linalg.eigvalsh(bound.beta_block(a, b))
        assert np.all(eig > 0)

    def test_softmax_block_value(self):
        hess = bound.cumulant_hess(bound.natural_params([1.0], [1.0], [0.5, 0.5]), 1)
        np.testing.assert_allclose(hess.softmax_block, [[0.25]])


class TestShermanMorrison:
    def test_beta_block_inverse(self):
        rng = np.random.default_rng(5)
        a, b = np.exp(rng.uniform(-2, 5, (2, 100)))
        closed = bound.beta_block_inverse(a, b)
        dense = np.linalg.inv(bound.beta_block(a, b))
        assert np.max(np.abs(closed - dense) / np.abs(dense)) < 1e-10
        prod = bound.beta_block(a, b) @ closed
        assert np.abs(prod - np.eye(2)).max() < 1e-10

    @pytest.mark.parametrize("M", [2, 3, 5])
    def test_softmax_inverse(self, M):
        rng = np.random.default_rng(M)
        for _ in range(100):
            p = rng.dirichlet(np.ones(M))[:-1]
            closed = bound.softmax_block_inverse(p)
            dense = np.linalg.inv(bound.softmax_block(p))
            assert np.max(np.abs(closed - dense)) <= 1e-10 * max(1.0, np.abs(dense).max())
            assert np.abs(bound.softmax_block(p) @ closed - np.eye(M - 1)).max() < 1e-10

    def test_newton_hessian_inverse(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a, b = np.exp(rng.uniform(-1, 3, 2))
            r1, r2 = -np.exp(rng.uniform(-1, 4, 2))
            e3 = np.exp(rng.uniform(-2, 2))
            i11, i12, i22 = bound.newton_hessian_inverse(r1, r2, e3, a, b)
            H = np.diag([r1, r2]) + e3 * np.outer([a, b], [a, b])
            dense = np.linalg.inv(H)
            closed = np.array([[i11, i12], [i12, i22]])
            assert np.abs(closed - dense).max() <= 1e-10 * max(1.0, np.abs(dense).max())

    def test_singular_softmax(self):
        with pytest.raises(SingularBlock):
            bound.softmax_block_inverse(np.array([0.6, 0.4]))

    def test_singular_newton(self):
        # 1 + e3 (a^2/r1 + b^2/r2) = 0
        with pytest.raises(SingularBlock):
            bound.newton_hessian_inverse(-1.0, -1.0, 0.5, 1.0, 1.0)


class TestG:
    def test_monotone(self):
        g = bound.g_function(np.linspace(0.0, 0.5, 1000))
        assert np.all(np.diff(g) >= 0)
        assert bound.g_function(0.0) >= 0

    def test_out_of_range(self):
        for bad in (-0.01, 0.51, np.nan):
            with pytest.raises(OutOfRange):
                bound.g_function(bad)

    def test_tiny_arguments_stay_positive(self):
        assert bound.g_function(1e-30) > 0

    def test_doubling_keeps_dominance(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            D, M = int(rng.choice([1, 2, 4])), int(rng.choice([2, 3]))
            a0, b0, al0 = random_mixture(rng, D, M)
            X = random_points(rng, 5, D)
            lv, lw, lj = bound.stick_logs(X)
            loose = bound.compute_variational(lv, lw, lj, a0, b0, al0, g_scale=2.0)
            np.testing.assert_allclose(bound.upper_bound_value(loose, a0, b0, al0), loose.log_mix, atol=1e-8)
            a = a0 * np.exp(rng.normal(0, 0.5, a0.shape))
            b = b0 * np.exp(rng.normal(0, 0.5, b0.shape))
            al = rng.dirichlet(np.ones(M))
            exact = bound.log_mixture(lv, lw, lj, a, b, al)
            assert np.all(bound.upper_bound_value(loose, a, b, al) >= exact - 1e-9)

    def test_calibration_search(self):
        assert bound.calibrate_g_scale(lambda g: g >= 3.0, grow=2.0) == 4.0
        with pytest.raises(RuntimeError):
            bound.calibrate_g_scale(lambda g: False, max_rounds=3)


def _xdd(xbar, kp, resp, W):
    return kp + (resp / W) * (kp - xbar)


def _admissible(xdd, D, M, scale=1.0):
    beta = xdd[:2 * D].reshape(D, 2)
    cat = xdd[2 * D:]
    ok = np.all(beta < np.log(scale)) and np.all(np.exp(beta).sum(axis=1) < scale)
    return ok and np.all(cat > 0) and np.all(cat < 1) and cat.sum() < 1


class TestWMin:
    def test_zero_displacement(self):
        theta = bound.natural_params([2.0, 3.0], [1.5, 4.0], [0.2, 0.3, 0.5])
        kp = bound.cumulant_grad(theta, 2)
        assert bound.w_min(kp, kp, 0.4, 2) == bound.W_EPS

    def test_constraints_hold_just_above_minimum(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            D, M = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            scale = float(rng.choice([1.0, 3.0]))
            theta = random_theta(rng, D, M)
            kp = bound.cumulant_grad(theta, D, scale)
            v = np.clip(scale * rng.beta(0.5, 0.5, D), 1e-8 * scale, scale * (1 - 1e-8))
            k = int(rng.integers(M))
            xbar = bound.sufficient_stats(v, k, M, scale)
            resp = float(rng.uniform(0, 1))
            W = bound.w_min(xbar, kp, resp, D, scale) + 1e-10
            assert _admissible(_xdd(xbar, kp, resp, W), D, M, scale)

    def test_matches_exhaustive_expressions(self):
        # D = 1, M = 2 written out term by term
        theta = bound.natural_params([0.8], [2.5], [0.7, 0.3])
        kp = bound.cumulant_grad(theta, 1)
        resp = 0.6
        for v, k in [(0.97, 0), (0.03, 1), (0.5, 0)]:
            xbar = np.array([np.log(v), np.log(1 - v), 1.0 if k == 0 else 0.0])
            r = xbar - kp
            exprs = [resp * r[0] / (kp[0] - 0.0), resp * r[1] / (kp[1] - 0.0),
                     resp * r[2] / kp[2], resp * r[2] / (kp[2] - 1.0), resp * r[2] / (kp[2] - 1.0)]
            terms = bound.bound_terms(xbar, kp, resp, 1)
            assert terms.max() == pytest.approx(max(exprs), rel=1e-14)

    def test_mean_space_constraint_is_needed(self):
        # the per-coordinate limits alone can leave exp(s) + exp(t) >= 1
        theta = bound.natural_params([1.0], [1.0], [0.5, 0.5])
        kp = bound.cumulant_grad(theta, 1)
        xbar = np.array([np.log(0.05), np.log(0.95), 1.0])
        resp = 1.0
        box = max(bound.bound_terms(xbar, kp, resp, 1).max(), 0.0) + 1e-6
        assert not _admissible(_xdd(xbar, kp, resp, box), 1, 2)
        assert _admissible(_xdd(xbar, kp, resp, bound.w_min(xbar, kp, resp, 1)), 1, 2)


class TestVariationalState:
    def test_tangency_and_weights(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            D, M = int(rng.choice([1, 2, 4])), int(rng.choice([2, 3]))
            scale = float(rng.choice([1.0, 5.0]))
            a, b, al = random_mixture(rng, D, M)
            lv, lw, lj = bound.stick_logs(random_points(rng, 10, D, scale), scale)
            st = bound.compute_variational(lv, lw, lj, a, b, al, scale)
            np.testing.assert_allclose(bound.upper_bound_value(st, a, b, al), st.log_mix, atol=1e-8, rtol=0)
            assert np.all(st.W >= st.wmin)
            assert np.all(np.exp(st.xdd_beta).sum(axis=-1) < scale)
            cat = st.xdd_cat
            assert np.all((cat > 0) & (cat < 1)) and np.all(cat.sum(axis=-1) < 1)

    def test_vectorised_minimum_matches_scalar(self):
        rng = np.random.default_rng(10)
        D, M = 2, 3
        a, b, al = random_mixture(rng, D, M)
        X = random_points(rng, 6, D)
        lv, lw, lj = bound.stick_logs(X)
        st = bound.compute_variational(lv, lw, lj, a, b, al)
        for n in range(6):
            for k in range(M):
                theta = np.concatenate([np.column_stack([a[k], b[k]]).ravel(), np.log(al[:-1] / al[-1])])
                kp = bound.cumulant_grad(theta, D)
                xbar = bound.sufficient_stats(np.exp(lv[n]), k, M)
                assert st.wmin[n, k] == pytest.approx(bound.w_min(xbar, kp, st.resp[n, k], D), rel=1e-9)

    def test_zero_displacement_keeps_gradient(self):
        a, b = np.array([[2.0]]), np.array([[3.0]])
        al = np.array([1.0])
        kp = bound.cumulant_grad(bound.natural_params(a[0], b[0], al), 1)
        st = bound.compute_variational(kp[None, :1], kp[None, 1:2], np.zeros(1), a, b, al)
        np.testing.assert_allclose(st.xdd_beta[0, 0, 0], kp[:2], atol=1e-14)

    def test_negated_bound_is_concave_along_slices(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            D, M = int(rng.choice([1, 2])), int(rng.choice([2, 3]))
            a, b, al = random_mixture(rng, D, M)
            lv, lw, lj = bound.stick_logs(random_points(rng, 3, D))
            st = bound.compute_variational(lv, lw, lj, a, b, al)
            k, d = int(rng.integers(M)), int(rng.integers(D))
            h = 1e-3 * a[k, d]

            def ub(delta):
                a2 = a.copy()
                a2[k, d] += delta
                return bound.upper_bound_value(st, a2, b, al)

            second = ub(h) - 2 * ub(0.0) + ub(-h)
            assert np.all(-second <= 1e-9)

    def test_switching_off_gives_contact_log_mixture(self):
        rng = np.random.default_rng(12)
        a, b, al = random_mixture(rng, 2, 3)
        lv, lw, lj = bound.stick_logs(random_points(rng, 4, 2))
        st = bound.compute_variational(lv, lw, lj, a, b, al, variational=False)
        a2, b2, al2 = random_mixture(rng, 2, 3)
        np.testing.assert_allclose(bound.upper_bound_value(st, a2, b2, al2), st.log_mix)


def dominance_sweep(triples, seed):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for t in range(triples):
        D = (1, 2, 4)[t % 3]
        M = (2, 3)[t % 2]
        a0, b0, al0 = random_mixture(rng, D, M)
        X = random_points(rng, 1, D)
        lv, lw, lj = bound.stick_logs(X)
        st = bound.compute_variational(lv, lw, lj, a0, b0, al0)
        s = rng.choice([0.05, 0.5, 2.0])
        a = a0 * np.exp(rng.normal(0, s, a0.shape))
        b = b0 * np.exp(rng.normal(0, s, b0.shape))
        al = rng.dirichlet(np.ones(M) * rng.choice([0.3, 1.0, 5.0]))
        gap = bound.upper_bound_value(st, a, b, al) - bound.log_mixture(lv, lw, lj, a, b, al)
        worst = min(worst, float(gap.min()))
    return worst


def test_dominance_sweep():
    assert dominance_sweep(2000, seed=13) >= -1e-9


def test_dominance_far_from_contact_in_one_component():
    # a component with negligible contact responsibility that becomes dominant
    a0 = np.array([[20.0, 1.1], [3.3, 30.5], [1.3, 21.5]])
    b0 = np.array([[5.4, 1.1], [2.4, 0.54], [10.6, 13.9]])
    al0 = np.array([0.033, 0.008, 0.959])
    v = np.array([[0.133, 0.070]])
    lv, lw, lj = np.log(v), np.log(1 - v), np.zeros(1)
    st = bound.compute_variational(lv, lw, lj, a0, b0, al0)
    a = a0.copy()
    b = b0.copy()
    a[1] = [2.2, 0.22]
    b[1] = [3.0, 0.10]
    exact = bound.log_mixture(lv, lw, lj, a, b, al0)
    assert bound.upper_bound_value(st, a, b, al0)[0] >= exact[0] - 1e-9
