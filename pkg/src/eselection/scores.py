"""Per-step MAE scores, score differences and rolling averages.

Score differences are oriented so that negative values favour forecast P
(MAE is negatively oriented: smaller is better).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputShapeError, InsufficientHistoryError, ParameterError


@dataclass(frozen=True)
class ForecastTriple:
    """One step of input: two forecast horizons and the realised outcomes.

    ``p``, ``q`` and ``y`` are horizon vectors of equal length H, in Watts.
    """

    t: int
    p: np.ndarray
    q: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("p", "q", "y"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or a.size == 0:
                raise InputShapeError(f"{name} must be a non-empty 1-d vector, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise DataError(f"non-finite entry in {name} at step {self.t}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if not (arrays[0].size == arrays[1].size == arrays[2].size):
            raise InputShapeError(
                f"horizon lengths differ at step {self.t}: "
                f"p={arrays[0].size}, q={arrays[1].size}, y={arrays[2].size}"
            )

    @property
    def horizon(self) -> int:
        return self.p.size


def mae(forecast, outcome) -> float:
    """Mean absolute error over a forecast horizon."""
    f = np.asarray(forecast, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if f.ndim != 1 or f.shape != y.shape or f.size == 0:
        raise InputShapeError(f"mae needs equal non-empty 1-d vectors, got {f.shape} and {y.shape}")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise DataError("mae received a non-finite entry")
    return float(np.mean(np.abs(f - y)))


def score_difference(triple: ForecastTriple) -> float:
    """``mae(p, y) - mae(q, y)`` for one step."""
    return mae(triple.p, triple.y) - mae(triple.q, triple.y)


def rolling_average(delta_tilde, t: int, window: int) -> float:
    """Mean of the ``window`` entries ending at 1-based step ``t``.

    The window is ``delta_tilde[t-window : t]`` in 0-based slicing, i.e. steps
    ``t-window+1 .. t``.
    """
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    if t < window:
        raise InsufficientHistoryError(f"step {t} precedes a full window of {window}")
    if t > len(delta_tilde):
        raise InsufficientHistoryError(f"step {t} beyond available history ({len(delta_tilde)})")
    return math.fsum(delta_tilde[t - window:t]) / window


def batch_scores(p: np.ndarray, q: np.ndarray, y: np.ndarray):
    """Vectorised per-row MAE for (N, H) matrices. Returns ``(mae_p, mae_q)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.ndim != 2 or p.shape != q.shape or p.shape != y.shape:
        raise InputShapeError(f"expected equal (N, H) matrices, got {p.shape}, {q.shape}, {y.shape}")
    return np.mean(np.abs(p - y), axis=1), np.mean(np.abs(q - y), axis=1)


class RollingWindow:
    """Fixed-length window with a compensated running sum.

    Appending is O(1). The sum is kept with Neumaier compensation so long
    streams do not drift away from a fresh recomputation.
    """

    def __init__(self, size: int):
        if size < 1:
            raise ParameterError(f"window size must be >= 1, got {size}")
        self.size = size
        self._buf: deque[float] = deque()
        self._sum = 0.0
        self._comp = 0.0

    def _add(self, x: float) -> None:
        s = self._sum + x
        if abs(self._sum) >= abs(x):
            self._comp += (self._sum - s) + x
        else:
            self._comp += (x - s) + self._sum
        self._sum = s

    def push(self, x: float) -> None:
        x = float(x)
        self._buf.append(x)
        self._add(x)
        if len(self._buf) > self.size:
            self._add(-self._buf.popleft())

    @property
    def full(self) -> bool:
        return len(self._buf) == self.size

    def __len__(self) -> int:
        return len(self._buf)

    def values(self) -> list[float]:
        return list(self._buf)

    def mean(self) -> float:
        if not self.full:
            raise InsufficientHistoryError(f"{len(self._buf)} of {self.size} window entries available")
        return (self._sum + self._comp) / self.size


@dataclass
class ScoreStream:
    """Evidence stream: raw and bounded differences plus the rolling mean.

    ``rolling_mean[i]`` is ``nan`` until a full window is available.
    """

    window: int
    delta_hat: list[float] = field(default_factory=list)
    delta_tilde: list[float] = field(default_factory=list)
    rolling_mean: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._roll = RollingWindow(self.window)

    def append(self, delta_hat: float, delta_tilde: float) -> float:
        if abs(delta_tilde) > 0.5:
            raise DataError(f"bounded difference {delta_tilde} outside [-1/2, 1/2]")
        self.delta_hat.append(float(delta_hat))
        self.delta_tilde.append(float(delta_tilde))
        self._roll.push(delta_tilde)
        m = self._roll.mean() if self._roll.full else math.nan
        self.rolling_mean.append(m)
        return m
