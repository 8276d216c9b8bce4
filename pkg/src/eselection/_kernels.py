"""Compiled sliding-window kernels.

Arithmetic mirrors :func:`eselection.savi.update_eprocess` step for step
(running sum, running mean = sum / n, squared deviation) so that batch and
streaming paths agree to the last bit.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _window_stats_1d(x, omega, partial, out_s, out_v):
    # with partial windows, positions before the first full window hold the
    # growing process started at position 0
    head = 0
    if partial:
        head = min(omega - 1, x.shape[0])
        total = 0.0
        var = 0.0
        for j in range(head):
            mean = total / j if j > 0 else 0.0
            d = x[j] - mean
            var += d * d
            total += x[j]
            out_s[j] = total
            out_v[j] = var
    n_windows = x.shape[0] - omega + 1
    for s in range(n_windows):
        total = 0.0
        var = 0.0
        for j in range(omega):
            xi = x[s + j]
            mean = total / j if j > 0 else 0.0
            d = xi - mean
            var += d * d
            total += xi
        out_s[head + s] = total
        out_v[head + s] = var


@numba.njit(cache=True)
def _window_stats_2d(x, omega, partial, out_s, out_v):
    for r in range(x.shape[0]):
        _window_stats_1d(x[r], omega, partial, out_s[r], out_v[r])


def window_stats(x: np.ndarray, omega: int, partial: bool = False):
    """Window sums and variance processes along the last axis.

    ``x`` is 1-d (one stream) or 2-d (one stream per row). Without
    ``partial`` there is one entry per full window and entry ``k`` covers
    ``x[..., k : k + omega]``. With ``partial`` there is one entry per
    position and entry ``k`` covers ``x[..., max(0, k - omega + 1) : k + 1]``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[-1]
    n_out = n if partial else max(n - omega + 1, 0)
    shape = x.shape[:-1] + (n_out,)
    out_s = np.empty(shape)
    out_v = np.empty(shape)
    if n_out == 0:
        return out_s, out_v
    if x.ndim == 1:
        _window_stats_1d(x, omega, partial, out_s, out_v)
    else:
        _window_stats_2d(x, omega, partial, out_s, out_v)
    return out_s, out_v


def window_counts(n: int, omega: int, partial: bool = False) -> np.ndarray:
    """Number of observations behind each entry of :func:`window_stats`."""
    if partial:
        return np.minimum(np.arange(1, n + 1), omega).astype(float)
    return np.full(max(n - omega + 1, 0), float(omega))
