"""Pinball loss, the summed multi-quantile objective, and two point-estimate baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass
class LossValue:
    value: float
    grad: np.ndarray  # d value / d estimates


def _check_tau(tau):
    tau_arr = np.asarray(tau, dtype=np.float64)
    if not np.all((tau_arr > 0) & (tau_arr < 1)):
        raise InvalidArgument(f"quantile level must lie in (0, 1), got {tau}")


def pinball(y, t, tau):
    _check_tau(tau)
    diff = y - t
    return tau * diff if diff >= 0 else (1 - tau) * (-diff)


def pinball_grad(y, t, tau):
    """Subgradient w.r.t. ``t``; at ``y == t`` the ``y >= t`` branch is used."""
    _check_tau(tau)
    return -tau if y >= t else 1 - tau


def qr_loss(y, estimates, levels) -> LossValue:
    """Sum of pinball losses over all quantile levels for one target."""
    t = np.asarray(estimates, dtype=np.float64)
    tau = np.asarray(levels, dtype=np.float64)
    if t.shape != tau.shape or t.ndim != 1:
        raise InvalidArgument(f"estimates {t.shape} and levels {tau.shape} differ")
    _check_tau(tau)
    diff = y - t
    above = diff >= 0
    value = np.where(above, tau * diff, (tau - 1) * diff).sum()
    grad = np.where(above, -tau, 1 - tau)
    return LossValue(float(value), grad)


def qr_loss_batch(y, estimates, levels):
    """Batch version of :func:`qr_loss`, averaged over rows.

    Returns ``(mean_loss, grad)`` where ``grad`` has the shape of ``estimates``
    and already carries the ``1 / batch`` factor.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(estimates, dtype=np.float64)
    tau = np.asarray(levels, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != y.shape[0] or t.shape[1] != tau.shape[0]:
        raise InvalidArgument(
            f"estimates {t.shape} incompatible with targets {y.shape} / levels {tau.shape}")
    n = y.shape[0]
    diff = y[:, None] - t
    above = diff >= 0
    per_row = np.where(above, tau * diff, (tau - 1) * diff).sum(axis=1)
    grad = np.where(above, -tau, 1 - tau) / n
    return float(per_row.mean()), grad


def bce_baseline(r, logit):
    """Binary cross-entropy on a logit, written via ``logaddexp`` for stability.

    Returns ``(value, d value / d logit)``.
    """
    if not 0 <= r <= 1:
        raise InvalidArgument(f"label must lie in [0, 1], got {r}")
    # -log sigmoid(z) = log(1 + e^-z);  -log(1 - sigmoid(z)) = log(1 + e^z)
    value = r * np.logaddexp(0.0, -logit) + (1 - r) * np.logaddexp(0.0, logit)
    sig = 0.5 * (1 + np.tanh(0.5 * logit))
    return float(value), float(sig - r)


def mse_baseline(y, pred):
    diff = pred - y
    return diff * diff, 2 * diff
