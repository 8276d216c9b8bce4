"""Dual e-processes, sequential tests and confidence sequences.

For a window of bounded differences ``d_1 .. d_n`` the e-process against
``H0(p, q): Delta <= 0`` is

    log E  = lam * sum(d) - psi_E(lam) * V_n
    log E* = -lam * sum(d) - psi_E(lam) * V_n      (against H0(q, p))

with ``V_n = sum_i (d_i - mean(d_1 .. d_{i-1}))**2`` and the empty mean
taken as 0. Everything is kept in log space; E routinely exceeds the float
range on long one-sided stretches.

Each side is tested at level alpha/2, so the rejection threshold is 2/alpha.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._kernels import window_counts, window_stats
from .errors import ParameterError, SequencingError
from .transform import TransformSpec, unbound


def _check_lam(lam) -> None:
    la = np.asarray(lam, dtype=float)
    if not np.all((la >= 0.0) & (la < 1.0)):
        raise ParameterError(f"lambda must lie in [0, 1), got {lam}")


def psi_e(lam):
    """Sub-exponential psi function ``-log(1 - lam) - lam``."""
    _check_lam(lam)
    out = -np.log1p(-np.asarray(lam, dtype=float)) - np.asarray(lam, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def psi_n(lam):
    """Sub-Gaussian psi function ``lam**2 / 2``.

    Provided for comparison plots only; the decision pipeline uses psi_e.
    """
    la = np.asarray(lam, dtype=float)
    if not np.all(la >= 0.0):
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    out = 0.5 * la * la
    return float(out) if out.ndim == 0 else out


def log_threshold(alpha: float) -> float:
    """log of the per-side rejection threshold 2/alpha."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return math.log(2.0 / alpha)


def update_variance(v_hat: float, delta_tilde: float, prev_mean: float) -> float:
    d = delta_tilde - prev_mean
    return v_hat + d * d


@dataclass(frozen=True)
class EProcessState:
    lam: float
    alpha: float = 0.05
    log_e: float = 0.0
    log_e_star: float = 0.0
    v_hat: float = 0.0
    window_anchor: int = 0
    n: int = 0
    running_sum: float = 0.0

    def __post_init__(self):
        _check_lam(self.lam)
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def mean(self) -> float:
        """In-window running mean; 0 before the first observation."""
        return self.running_sum / self.n if self.n > 0 else 0.0

    @property
    def e_value(self) -> float:
        return math.exp(self.log_e)

    @property
    def e_value_star(self) -> float:
        return math.exp(self.log_e_star)


def update_eprocess(state: EProcessState, delta_tilde: float) -> EProcessState:
    """Successor state after one bounded difference."""
    v = update_variance(state.v_hat, delta_tilde, state.mean)
    total = state.running_sum + delta_tilde
    psi = psi_e(state.lam)
    return replace(
        state,
        v_hat=v,
        running_sum=total,
        n=state.n + 1,
        log_e=state.lam * total - psi * v,
        log_e_star=-state.lam * total - psi * v,
    )


def restart_window(state: EProcessState, anchor: int) -> EProcessState:
    """Fresh window starting at step ``anchor``; keeps lam and alpha."""
    if anchor <= state.window_anchor:
        raise SequencingError(f"window anchor must increase: {anchor} <= {state.window_anchor}")
    return EProcessState(lam=state.lam, alpha=state.alpha, window_anchor=anchor)


@dataclass(frozen=True)
class TestVerdict:
    reject_pq: bool
    reject_qp: bool
    p_value: float
    p_value_star: float

    __test__ = False  # keep pytest from collecting this class


def p_value_from_log_e(log_e):
    """``min(1, 1/E)`` computed from log E; elementwise on arrays."""
    out = np.exp(-np.maximum(np.asarray(log_e, dtype=float), 0.0))
    return float(out) if out.ndim == 0 else out


def verdict(state: EProcessState) -> TestVerdict:
    thr = log_threshold(state.alpha)
    return TestVerdict(
        reject_pq=state.log_e >= thr,
        reject_qp=state.log_e_star >= thr,
        p_value=p_value_from_log_e(state.log_e),
        p_value_star=p_value_from_log_e(state.log_e_star),
    )


@dataclass(frozen=True)
class ConfidenceBand:
    """Band for the average differential.

    Watts bounds are ``-inf`` / ``+inf`` when the transformed bound leaves
    (-1/2, 1/2); ``bounded_watts`` records whether both were finite.
    """

    t: int
    lower: float
    upper: float
    lower_watts: float
    upper_watts: float

    @property
    def bounded_watts(self) -> bool:
        return math.isfinite(self.lower_watts) and math.isfinite(self.upper_watts)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


def boundary_half_width(v_hat, n, lam: float, alpha: float):
    """``(psi_E(lam) * V - log(alpha / 2)) / (lam * n)``; elementwise."""
    if lam <= 0.0:
        raise ParameterError("confidence band undefined for lambda = 0")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    with np.errstate(over="ignore"):  # tiny lambda: the band is unbounded
        u = (psi_e(lam) * np.asarray(v_hat, dtype=float) - math.log(alpha / 2.0)) / lam
        out = u / np.asarray(n, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def to_watts(d, spec: Optional[TransformSpec]):
    """Back-transform a band edge; infinite where it leaves (-1/2, 1/2)."""
    if spec is None:
        return math.nan
    if d <= -0.5:
        return -math.inf
    if d >= 0.5:
        return math.inf
    return unbound(d, spec)


def confidence_band(
    state: EProcessState,
    center: Optional[float] = None,
    t: Optional[int] = None,
    spec: Optional[TransformSpec] = None,
) -> ConfidenceBand:
    """Symmetric (1 - alpha) band around the in-window mean.

    ``center`` defaults to the state's own running mean; ``t`` defaults to the
    last in-window step.
    """
    if state.n < 1:
        raise ParameterError("confidence band needs at least one in-window observation")
    half = boundary_half_width(state.v_hat, state.n, state.lam, state.alpha)
    c = state.mean if center is None else center
    lo, hi = c - half, c + half
    step = state.window_anchor + state.n - 1 if t is None else t
    return ConfidenceBand(step, lo, hi, to_watts(lo, spec), to_watts(hi, spec))


@dataclass(frozen=True)
class WindowEvaluation:
    t: int
    state: EProcessState
    verdict: TestVerdict
    band: Optional[ConfidenceBand]


class SlidingEProcess:
    """Streaming evaluator over the most recent ``window`` observations.

    Each full-window step rebuilds the state from a fresh anchor over the
    buffered values, so the state at step t covers exactly steps
    ``t - window + 1 .. t``. Cost is O(window) per step. With ``partial``
    the steps before the first full window are evaluated too, on the
    process started at step 1.
    """

    def __init__(self, lam: float, window: int, alpha: float = 0.05, spec: Optional[TransformSpec] = None,
                 partial: bool = False):
        if window < 1:
            raise ParameterError(f"window must be >= 1, got {window}")
        self.window = window
        self.spec = spec
        self.partial = partial
        self.state = EProcessState(lam=lam, alpha=alpha)
        self._buf: deque[float] = deque(maxlen=window)
        self.t = 0

    def push(self, delta_tilde: float) -> Optional[WindowEvaluation]:
        """Add one step; returns ``None`` while a full window is filling
        (unless ``partial``)."""
        self.t += 1
        x = float(delta_tilde)
        self._buf.append(x)
        if self.t < self.window and not self.partial:
            return None
        if self.partial and self.t <= self.window:
            # the window still starts at step 1: grow the process
            base = self.state if self.t > 1 else restart_window(self.state, 1)
            state = update_eprocess(base, x)
        else:
            state = restart_window(self.state, self.t - self.window + 1)
            for v in self._buf:
                state = update_eprocess(state, v)
        self.state = state
        band = confidence_band(state, t=self.t, spec=self.spec) if state.lam > 0 else None
        return WindowEvaluation(self.t, state, verdict(state), band)


@dataclass(frozen=True)
class WindowSeries:
    """Vectorised e-process values for every evaluated window of a stream.

    Without ``partial``, index ``k`` is the window ending at 0-based
    position ``k + window - 1``. With ``partial``, index ``k`` is the window
    ending at position ``k``, truncated at the start of the stream.
    """

    window: int
    sums: np.ndarray
    v_hat: np.ndarray
    counts: np.ndarray
    partial: bool = False

    @classmethod
    def from_stream(cls, delta_tilde, window: int, partial: bool = False) -> "WindowSeries":
        if window < 1:
            raise ParameterError(f"window must be >= 1, got {window}")
        x = np.asarray(delta_tilde, dtype=float)
        s, v = window_stats(x, window, partial)
        return cls(window, s, v, window_counts(x.shape[-1], window, partial), partial)

    @property
    def first_position(self) -> int:
        """0-based stream position of entry 0."""
        return 0 if self.partial else self.window - 1

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.counts

    def log_e(self, lam: float) -> np.ndarray:
        return lam * self.sums - psi_e(lam) * self.v_hat

    def log_e_star(self, lam: float) -> np.ndarray:
        return -lam * self.sums - psi_e(lam) * self.v_hat

    def half_width(self, lam: float, alpha: float) -> np.ndarray:
        return boundary_half_width(self.v_hat, self.counts, lam, alpha)
