import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqe import nn
from cqe.errors import InvalidArgument, InvalidState, NumericFailure


def straight_line_forward(params, x):
    """Plain-Python evaluation of the same network, written without numpy matmuls."""
    a = [float(v) for v in x]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = [sum(w[r][c] * a[c] for c in range(len(a))) + b[r] for r in range(len(b))]
        a = z if i == last else [max(v, 0.0) for v in z]
    return a


def random_params(sizes, seed):
    p = nn.init_mlp(sizes, seed)
    r = np.random.default_rng(seed + 1)
    for b in p.biases:
        b[:] = r.normal(0, 0.3, size=b.shape)
    return p


def finite_diff_grads(params, x, g, eps=1e-5):
    """Central differences of sum(forward(x) * g) for every parameter."""
    probe = params.copy()
    out = []
    for p in probe.arrays():
        flat = p.reshape(-1)
        grad = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = np.sum(nn.forward(probe, x)[1] * g)
            flat[j] = orig - eps
            down = np.sum(nn.forward(probe, x)[1] * g)
            flat[j] = orig
            grad[j] = (up - down) / (2 * eps)
        out.append(grad.reshape(p.shape))
    return out


class TestInit:
    def test_bias_zero_and_shapes(self):
        p = nn.init_mlp([2, 1], seed=7)
        assert p.weights[0].shape == (1, 2)
        assert p.biases[0].tolist() == [0.0]
        assert p.n_params == 3

    def test_deterministic(self):
        a, b = nn.init_mlp([4, 8, 5], 1), nn.init_mlp([4, 8, 5], 1)
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_param_count(self):
        assert nn.init_mlp([4, 8, 5], 1).n_params == 4 * 8 + 8 + 8 * 5 + 5 == 85

    def test_glorot_bounds(self):
        p = nn.init_mlp([30, 10], 3)
        assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 40)

    @pytest.mark.parametrize("sizes", [[], [3], [3, 0], [0, 2]])
    def test_invalid(self, sizes):
        with pytest.raises(InvalidArgument):
            nn.init_mlp(sizes, 0)


class TestForward:
    def test_identity(self):
        p = nn.MLPParams([np.eye(2)], [np.zeros(2)])
        _, out = nn.forward(p, [3.0, -1.0])
        assert out.tolist() == [3.0, -1.0]

    def test_zero_net(self):
        p = nn.init_mlp([3, 4, 2], 0).zeros_like()
        _, out = nn.forward(p, [1.0, 2.0, 3.0])
        assert out.tolist() == [0.0, 0.0]

    def test_matches_straight_line(self, rng):
        p = random_params([5, 7, 4, 3], 11)
        x = rng.normal(size=5)
        _, out = nn.forward(p, x)
        np.testing.assert_allclose(out, straight_line_forward(p, x), rtol=1e-12, atol=1e-12)

    def test_batch_matches_rows(self, rng):
        p = random_params([5, 7, 3], 2)
        X = rng.normal(size=(6, 5))
        _, out = nn.forward(p, X)
        for i in range(6):
            np.testing.assert_allclose(out[i], nn.forward(p, X[i])[1], rtol=0, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgument):
            nn.forward(nn.init_mlp([3, 2], 0), [1.0, 2.0])


class TestBackward:
    def test_zero_grad_output(self, rng):
        p = random_params([4, 6, 3], 0)
        cache, _ = nn.forward(p, rng.normal(size=4))
        grads = nn.backward(p, cache, np.zeros(3))
        assert all(not g.any() for g in grads.arrays())

    def test_linear_case(self):
        p = nn.MLPParams([np.array([[0.7]])], [np.zeros(1)])
        cache, _ = nn.forward(p, [2.0])
        grads = nn.backward(p, cache, [1.0])
        assert grads.weights[0][0, 0] == 2.0
        assert grads.biases[0][0] == 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        p = random_params([4, 6, 5, 3], seed)
        x = r.normal(size=(3, 4))
        g = r.normal(size=(3, 3))
        cache, _ = nn.forward(p, x)
        analytic = list(nn.backward(p, cache, g).arrays())
        numeric = finite_diff_grads(p, x, g)
        for a, n in zip(analytic, numeric):
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)
            assert rel.max() < 1e-4

    def test_stale_cache(self, rng):
        p = random_params([4, 6, 3], 0)
        cache, _ = nn.forward(p, rng.normal(size=4))
        other = random_params([4, 5, 3], 0)
        with pytest.raises(InvalidState):
            nn.backward(other, cache, np.ones(3))
        deeper = random_params([4, 6, 3, 2], 0)
        with pytest.raises(InvalidState):
            nn.backward(deeper, cache, np.ones(2))

    def test_input_gradient(self, rng):
        p = random_params([3, 5, 2], 4)
        x = rng.normal(size=3)
        g = np.array([0.3, -1.2])
        cache, _ = nn.forward(p, x)
        _, dx = nn.backward(p, cache, g, return_input_grad=True)
        eps = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = eps
            num = (nn.forward(p, x + e)[1] @ g - nn.forward(p, x - e)[1] @ g) / (2 * eps)
            assert dx[j] == pytest.approx(num, rel=1e-5, abs=1e-9)


class TestGradCheck:
    def test_quadratic_on_linear_net(self, rng):
        p = random_params([3, 2], 5)
        X = rng.normal(size=(8, 3))
        Y = rng.normal(size=(8, 2))

        def closure(q):
            cache, out = nn.forward(q, X)
            r = out - Y
            return float((r * r).sum()), nn.backward(q, cache, 2 * r)

        assert nn.grad_check(p, closure) < 1e-8

    def test_zero_eps(self):
        p = nn.init_mlp([2, 1], 0)
        with pytest.raises(InvalidArgument):
            nn.grad_check(p, lambda q: (0.0, q.zeros_like()), eps=0)

    def test_non_finite_loss(self):
        p = nn.init_mlp([2, 1], 0)
        with pytest.raises(NumericFailure):
            nn.grad_check(p, lambda q: (float("nan"), q.zeros_like()))


class TestStep:
    def test_sgd_exact(self):
        p = nn.MLPParams([np.array([[1.0]])], [np.array([0.0])])
        g = nn.MLPParams([np.array([[0.5]])], [np.array([0.0])])
        new, state = nn.step(p, g, nn.init_opt_state(p, "sgd"), lr=0.1)
        assert new.weights[0][0, 0] == 0.95
        assert state.t == 1
        assert p.weights[0][0, 0] == 1.0  # input untouched

    def test_sgd_zero_gradient(self, rng):
        p = random_params([3, 4, 2], 0)
        new, _ = nn.step(p, p.zeros_like(), nn.init_opt_state(p, "sgd"), lr=0.5)
        for a, b in zip(p.arrays(), new.arrays()):
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("g", [1e-4, 0.3, 250.0, -7.0])
    def test_adam_first_step_is_lr(self, g):
        # t=1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        p = nn.MLPParams([np.array([[2.0]])], [np.array([0.0])])
        grads = nn.MLPParams([np.array([[g]])], [np.array([0.0])])
        lr = 0.01
        new, _ = nn.step(p, grads, nn.init_opt_state(p, "adam"), lr)
        expected = 2.0 - lr * g / (abs(g) + 1e-8)
        assert new.weights[0][0, 0] == pytest.approx(expected, rel=1e-12)
        assert abs(2.0 - new.weights[0][0, 0]) == pytest.approx(lr, rel=1e-3)

    def test_nan_gradient(self):
        p = nn.init_mlp([2, 1], 0)
        g = p.zeros_like()
        g.weights[0][0, 0] = np.nan
        with pytest.raises(NumericFailure):
            nn.step(p, g, nn.init_opt_state(p), 0.1)

    def test_bad_lr(self):
        p = nn.init_mlp([2, 1], 0)
        with pytest.raises(InvalidArgument):
            nn.step(p, p.zeros_like(), nn.init_opt_state(p), 0.0)

    def test_unknown_optimizer(self):
        with pytest.raises(InvalidArgument):
            nn.init_opt_state(nn.init_mlp([2, 1], 0), "rmsprop")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), hidden=st.integers(1, 12), scale=st.floats(0.1, 50))
def test_forward_backward_finite(seed, hidden, scale):
    r = np.random.default_rng(seed)
    p = random_params([4, hidden, 3], seed)
    x = r.normal(scale=scale, size=(5, 4))
    cache, out = nn.forward(p, x)
    grads = nn.backward(p, cache, r.normal(size=out.shape))
    assert np.isfinite(out).all()
    assert all(np.isfinite(g).all() for g in grads.arrays())
