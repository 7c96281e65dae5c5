"""Turning a vector of predicted quantiles into a single ranking score.

All functions accept a single estimate vector of shape ``(N,)`` or a batch of
shape ``(B, N)`` and reduce over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

KINDS = ("cse", "dqc", "cde")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "cde"
    tau_low: float = 0.25
    tau_high: float = 0.7
    k: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"strategy kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("tau_low", "tau_high"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise InvalidArgument(f"{name} must lie in (0, 1), got {v}")
        if not 0 <= self.k <= 1:
            raise InvalidArgument(f"k must lie in [0, 1], got {self.k}")
        if self.kind == "dqc" and not self.tau_low < self.tau_high:
            raise InvalidArgument("dqc needs tau_low < tau_high")


def quantile_at(estimates, levels, tau):
    """Piecewise-linear quantile function through the grid, flat outside it."""
    if not 0 < tau < 1:
        raise InvalidArgument(f"tau must lie in (0, 1), got {tau}")
    t = np.asarray(estimates, dtype=np.float64)
    lv = np.asarray(levels, dtype=np.float64)
    if t.shape[-1] != lv.shape[0]:
        raise InvalidArgument(f"{t.shape[-1]} estimates for {lv.shape[0]} levels")
    n = lv.shape[0]
    if tau <= lv[0]:
        return t[..., 0]
    if tau >= lv[-1]:
        return t[..., n - 1]
    j = int(np.searchsorted(lv, tau, side="right")) - 1
    if lv[j] == tau:
        return t[..., j]
    w = (tau - lv[j]) / (lv[j + 1] - lv[j])
    return (1 - w) * t[..., j] + w * t[..., j + 1]


def cse(estimates, levels, tau_low):
    return quantile_at(estimates, levels, tau_low)


def dqc(estimates, levels, tau_low, tau_high, k):
    """``k`` may be a scalar or one value per row of a batch."""
    k_arr = np.asarray(k, dtype=np.float64)
    if not np.all((k_arr >= 0) & (k_arr <= 1)):
        raise InvalidArgument(f"k must lie in [0, 1], got {k}")
    if not tau_low < tau_high:
        raise InvalidArgument(f"tau_low ({tau_low}) must be below tau_high ({tau_high})")
    lo = quantile_at(estimates, levels, tau_low)
    hi = quantile_at(estimates, levels, tau_high)
    return k_arr * lo + (1 - k_arr) * hi


def cde(estimates):
    """Mean of the linearly interpolated quantile function.

    The segments below the first and above the last level are held flat at
    the end values.
    """
    t = np.asarray(estimates, dtype=np.float64)
    if t.ndim == 0 or t.shape[-1] == 0:
        raise InvalidArgument("cde needs at least one estimate")
    n = t.shape[-1]
    return t.sum(axis=-1) / (n + 1) + (t[..., 0] + t[..., -1]) / (2 * (n + 1))


def apply_strategy(estimates, levels, strategy: StrategyConfig, k=None):
    """Score estimates with ``strategy``; ``k`` overrides ``strategy.k`` when given."""
    if strategy.kind == "cse":
        return cse(estimates, levels, strategy.tau_low)
    if strategy.kind == "dqc":
        return dqc(estimates, levels, strategy.tau_low, strategy.tau_high,
                   strategy.k if k is None else k)
    return cde(estimates)
