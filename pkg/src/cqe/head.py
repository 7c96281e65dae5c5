"""Quantile level grid and the non-crossing output head.

The head turns raw network outputs into quantile estimates by clamping them
at zero and taking a running sum, so every output row is non-decreasing and
non-negative by construction.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument


def make_levels(n: int) -> np.ndarray:
    """Quantile levels ``i / (n + 1)`` for ``i = 1..n``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"number of quantiles must be a positive integer, got {n}")
    n = int(n)
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


def head_forward(d_raw):
    """Works on the last axis, so a ``(batch, N)`` array is handled row-wise."""
    d_raw = np.asarray(d_raw, dtype=np.float64)
    return np.cumsum(np.maximum(d_raw, 0.0), axis=-1)


def head_backward(d_raw, grad_t):
    d_raw = np.asarray(d_raw, dtype=np.float64)
    grad_t = np.asarray(grad_t, dtype=np.float64)
    if d_raw.shape != grad_t.shape:
        raise InvalidArgument(f"shape mismatch: {d_raw.shape} vs {grad_t.shape}")
    # t_i depends on d_j for every i >= j
    tail = np.flip(np.cumsum(np.flip(grad_t, axis=-1), axis=-1), axis=-1)
    return tail * (d_raw > 0)
