import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqe.errors import InvalidArgument
from cqe.head import make_levels
from cqe.loss import (bce_baseline, mse_baseline, pinball, pinball_grad, qr_loss,
                      qr_loss_batch)

taus = st.floats(0.001, 0.999)
reals = st.floats(-1e3, 1e3, allow_nan=False)


class TestPinball:
    @pytest.mark.parametrize("y, t, tau, expected", [
        (2, 1, 0.5, 0.5),
        (1, 2, 0.25, 0.75),
        (3.3, 3.3, 0.9, 0.0),
    ])
    def test_values(self, y, t, tau, expected):
        assert pinball(y, t, tau) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("y, t, tau, expected", [
        (2, 1, 0.3, -0.3),
        (1, 2, 0.3, 0.7),
        (5, 5, 0.9, -0.9),
    ])
    def test_grad(self, y, t, tau, expected):
        assert pinball_grad(y, t, tau) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_bad_tau(self, tau):
        with pytest.raises(InvalidArgument):
            pinball(1, 2, tau)
        with pytest.raises(InvalidArgument):
            pinball_grad(1, 2, tau)

    @given(reals, reals, taus)
    def test_nonnegative(self, y, t, tau):
        assert pinball(y, t, tau) >= 0

    @given(reals, reals, taus)
    def test_grad_matches_fd_off_kink(self, y, t, tau):
        if abs(y - t) < 1e-3:
            return
        eps = 1e-7
        num = (pinball(y, t + eps, tau) - pinball(y, t - eps, tau)) / (2 * eps)
        assert pinball_grad(y, t, tau) == pytest.approx(num, abs=1e-5)


def brute_force_minimizer(sample, tau, n_grid):
    lo, hi = sample.min(), sample.max()
    grid = np.linspace(lo, hi, n_grid)
    diff = sample[None, :] - grid[:, None]
    losses = np.where(diff >= 0, tau * diff, (tau - 1) * diff).sum(axis=1)
    return grid[np.argmin(losses)], (hi - lo) / (n_grid - 1)


class TestEmpiricalMinimizer:
    @pytest.mark.parametrize("tau", [0.1, 0.25, 0.5, 0.75, 0.9])
    @pytest.mark.parametrize("seed", range(3))
    def test_grid_minimizer_is_sample_quantile(self, tau, seed):
        s = np.random.default_rng(seed).lognormal(1.0, 0.8, size=301)
        t_star, step = brute_force_minimizer(s, tau, 2001)
        # any minimizer lies between the floor/ceil order statistics
        srt = np.sort(s)
        k = tau * s.size
        lo, hi = srt[math.ceil(k) - 1], srt[math.floor(k)]
        assert lo - step <= t_star <= hi + step


class TestQRLoss:
    def test_single_quantile(self):
        assert qr_loss(2.0, [1.0], [0.5]).value == 0.5

    def test_two_quantiles(self):
        lv = qr_loss(2.0, [1.0, 3.0], make_levels(2))
        assert lv.value == pytest.approx(2 / 3, abs=1e-15)
        np.testing.assert_allclose(lv.grad, [-1 / 3, 1 / 3])

    def test_zero_at_target(self):
        assert qr_loss(4.0, [4.0] * 5, make_levels(5)).value == 0.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            qr_loss(1.0, [1.0, 2.0], make_levels(3))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 20))
    def test_convex_midpoint(self, seed, n):
        r = np.random.default_rng(seed)
        lv = make_levels(n)
        y = r.normal(10, 5)
        a, b = r.normal(10, 5, size=(2, n))
        mid = qr_loss(y, (a + b) / 2, lv).value
        avg = (qr_loss(y, a, lv).value + qr_loss(y, b, lv).value) / 2
        assert mid <= avg + 1e-12

    @given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 8))
    def test_batch_is_mean_of_rows(self, seed, n, b):
        r = np.random.default_rng(seed)
        lv = make_levels(n)
        y = r.normal(size=b)
        T = r.normal(size=(b, n))
        value, grad = qr_loss_batch(y, T, lv)
        rows = [qr_loss(y[i], T[i], lv) for i in range(b)]
        assert value == pytest.approx(np.mean([v.value for v in rows]), rel=1e-12)
        np.testing.assert_allclose(grad, np.stack([v.grad for v in rows]) / b, rtol=1e-12)


class TestBaselines:
    def test_bce_limit(self):
        value, _ = bce_baseline(1.0, 50.0)
        assert value < 1e-20

    def test_bce_symmetric(self):
        value, grad = bce_baseline(0.5, 0.0)
        assert value == pytest.approx(math.log(2), abs=1e-15)
        assert grad == 0.0

    def test_bce_extreme_logit_finite(self):
        assert math.isfinite(bce_baseline(0.0, 1e4)[0])

    @given(st.floats(0, 1), st.floats(-30, 30))
    def test_bce_grad_fd(self, r, z):
        eps = 1e-6
        num = (bce_baseline(r, z + eps)[0] - bce_baseline(r, z - eps)[0]) / (2 * eps)
        assert bce_baseline(r, z)[1] == pytest.approx(num, abs=1e-6)

    def test_bce_bad_label(self):
        with pytest.raises(InvalidArgument):
            bce_baseline(1.5, 0.0)

    def test_mse_values(self):
        assert mse_baseline(2.0, 2.0) == (0.0, 0.0)
        assert mse_baseline(1.0, 3.0) == (4.0, 4.0)

    @given(reals, reals)
    def test_mse_grad_fd(self, y, p):
        eps = 1e-4
        num = (mse_baseline(y, p + eps)[0] - mse_baseline(y, p - eps)[0]) / (2 * eps)
        assert mse_baseline(y, p)[1] == pytest.approx(num, rel=1e-6, abs=1e-6)
