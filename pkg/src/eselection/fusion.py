"""Turn lagged test verdicts into a fused forecast.

The decision at step t only looks at the verdict computed at ``t - lag``:

* H0(q, p) rejected there: P is better, use P.
* H0(p, q) rejected there: Q is better, use Q.
* otherwise fall back to the strategy: keep the previous choice
  (persistence), draw P with probability w_p (sampling), or blend with
  weights (w_p, 1 - w_p) (weighted average).

``w_p = (1 + p - p*) / 2`` where p, p* are the anytime-valid p-values of the
two e-processes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InputShapeError, ParameterError
from .savi import TestVerdict
from .scores import ForecastTriple

log = logging.getLogger(__name__)


class Source(str, Enum):
    P = "P"
    Q = "Q"
    FUSED = "FUSED"
    WARMUP = "WARMUP"


class Strategy(str, Enum):
    PERSISTENCE = "persistence"
    SAMPLING = "sampling"
    WAVG = "wavg"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(
                f"unknown strategy {value!r}; expected one of {[s.value for s in cls]}"
            ) from None


# integer codes used by the vectorised path
SOURCE_CODES = {Source.P: 0, Source.Q: 1, Source.FUSED: 2, Source.WARMUP: 3}
CODE_SOURCES = {v: k for k, v in SOURCE_CODES.items()}


@dataclass(frozen=True)
class SelectionDecision:
    t: int
    source: Source
    w_p: float
    w_q: float
    basis_step: int
    strategy: Strategy
    anomaly: bool = False


@dataclass(frozen=True)
class FusedForecast:
    t: int
    value: np.ndarray
    decision: SelectionDecision


def weights(p_value: float, p_value_star: float) -> tuple[float, float]:
    """Weights ``(w_p, w_q)`` from the two p-values; they sum to one."""
    for v in (p_value, p_value_star):
        if not 0.0 < v <= 1.0:
            raise ParameterError(f"p-values must lie in (0, 1], got {v}")
    w_p = (1.0 + p_value - p_value_star) / 2.0
    return w_p, 1.0 - w_p


def _arm_weights(source: Source) -> tuple[float, float]:
    return (1.0, 0.0) if source is Source.P else (0.0, 1.0)


def initial_decision(strategy, initial: Source = Source.P, t: int = 0, lag: int = 96) -> SelectionDecision:
    """Decision used before any verdict is available."""
    if initial not in (Source.P, Source.Q):
        raise ParameterError(f"initial arm must be P or Q, got {initial}")
    w_p, w_q = _arm_weights(initial)
    return SelectionDecision(t, Source.WARMUP, w_p, w_q, t - lag, Strategy.parse(strategy))


def decide(
    verdict_at_basis: Optional[TestVerdict],
    prev_decision: SelectionDecision,
    strategy,
    rng: Optional[np.random.Generator] = None,
    *,
    t: int,
    lag: int = 96,
) -> SelectionDecision:
    """One step of the selection rule.

    ``verdict_at_basis`` is the verdict at step ``t - lag``, or ``None`` if
    that step had no full window yet (the decision is then WARMUP and keeps
    ``prev_decision``'s arm). Under SAMPLING exactly one uniform is drawn
    from ``rng`` per call, whatever the branch, so the draw used at step t
    does not depend on earlier verdicts.
    """
    strategy = Strategy.parse(strategy)
    u = None
    if strategy is Strategy.SAMPLING:
        if rng is None:
            raise ParameterError("sampling strategy needs a random generator")
        u = rng.random()

    basis = t - lag
    prev_arm = Source.P if prev_decision.w_p >= 0.5 else Source.Q

    if verdict_at_basis is None:
        w_p, w_q = _arm_weights(prev_arm)
        return SelectionDecision(t, Source.WARMUP, w_p, w_q, basis, strategy)

    v = verdict_at_basis
    if v.reject_pq and v.reject_qp:
        # smaller p-value means larger e-value
        arm = Source.P if v.p_value_star <= v.p_value else Source.Q
        log.warning("both hypotheses rejected at basis step %d; choosing %s", basis, arm.value)
        w_p, w_q = _arm_weights(arm)
        return SelectionDecision(t, arm, w_p, w_q, basis, strategy, anomaly=True)
    if v.reject_qp:
        return SelectionDecision(t, Source.P, 1.0, 0.0, basis, strategy)
    if v.reject_pq:
        return SelectionDecision(t, Source.Q, 0.0, 1.0, basis, strategy)

    if strategy is Strategy.PERSISTENCE:
        w_p, w_q = _arm_weights(prev_arm)
        return SelectionDecision(t, prev_arm, w_p, w_q, basis, strategy)

    w_p, w_q = weights(v.p_value, v.p_value_star)
    if strategy is Strategy.SAMPLING:
        arm = Source.P if u < w_p else Source.Q
        a_p, a_q = _arm_weights(arm)
        return SelectionDecision(t, arm, a_p, a_q, basis, strategy)
    if w_p >= 1.0:
        return SelectionDecision(t, Source.P, 1.0, 0.0, basis, strategy)
    if w_p <= 0.0:
        return SelectionDecision(t, Source.Q, 0.0, 1.0, basis, strategy)
    return SelectionDecision(t, Source.FUSED, w_p, w_q, basis, strategy)


def blend(p: np.ndarray, q: np.ndarray, w_p) -> np.ndarray:
    """Convex combination, clipped so rounding never leaves [min, max]."""
    w_p = np.asarray(w_p, dtype=float)
    if w_p.ndim == 1:
        w_p = w_p[:, None]
    out = w_p * p + (1.0 - w_p) * q
    return np.clip(out, np.minimum(p, q), np.maximum(p, q))


def fuse(triple: ForecastTriple, decision: SelectionDecision) -> FusedForecast:
    if decision.t != triple.t:
        raise ParameterError(f"decision step {decision.t} does not match triple step {triple.t}")
    if triple.p.shape != triple.q.shape:
        raise InputShapeError("forecast horizons differ")
    if decision.w_p == 1.0:
        value = triple.p.copy()
    elif decision.w_p == 0.0:
        value = triple.q.copy()
    else:
        value = blend(triple.p, triple.q, decision.w_p)
    return FusedForecast(triple.t, value, decision)


def decide_batch(
    reject_pq: np.ndarray,
    reject_qp: np.ndarray,
    p_value: np.ndarray,
    p_value_star: np.ndarray,
    available: np.ndarray,
    strategy,
    uniforms: Optional[np.ndarray] = None,
    initial: Source = Source.P,
):
    """Vectorised :func:`decide` over a whole run.

    All inputs are aligned to decision steps (already shifted by the lag).
    Returns ``(codes, w_p, anomalies)`` with codes from ``SOURCE_CODES``.
    """
    strategy = Strategy.parse(strategy)
    n = len(available)
    available = np.asarray(available, dtype=bool)
    r_pq = np.asarray(reject_pq, dtype=bool) & available
    r_qp = np.asarray(reject_qp, dtype=bool) & available
    both = r_pq & r_qp
    pick_p = r_qp & ~(both & (np.asarray(p_value_star) > np.asarray(p_value)))
    pick_q = r_pq & ~pick_p
    if both.any():
        log.warning("both hypotheses rejected at %d basis steps", int(both.sum()))

    init_code = SOURCE_CODES[initial]
    codes = np.full(n, -1, dtype=np.int64)
    codes[pick_p] = SOURCE_CODES[Source.P]
    codes[pick_q] = SOURCE_CODES[Source.Q]
    undecided = available & ~(pick_p | pick_q)
    w_p = np.where(codes == 0, 1.0, 0.0)

    if strategy is Strategy.PERSISTENCE:
        # forward-fill the last rejection-driven arm, starting from the initial arm
        idx = np.where(codes >= 0, np.arange(n), -1)
        np.maximum.accumulate(idx, out=idx)
        arm = np.where(idx >= 0, codes[np.maximum(idx, 0)], init_code)
        codes = np.where(available, arm, SOURCE_CODES[Source.WARMUP])
        w_p = np.where(arm == 0, 1.0, 0.0)
    else:
        with np.errstate(invalid="ignore"):
            w = (1.0 + np.asarray(p_value, dtype=float) - np.asarray(p_value_star, dtype=float)) / 2.0
        if strategy is Strategy.SAMPLING:
            if uniforms is None or len(uniforms) != n:
                raise ParameterError("sampling strategy needs one uniform draw per step")
            draw_p = np.asarray(uniforms) < w
            codes[undecided] = np.where(draw_p[undecided], 0, 1)
            w_p[undecided] = np.where(draw_p[undecided], 1.0, 0.0)
        else:
            wu = w[undecided]
            codes[undecided] = np.where(wu >= 1.0, 0, np.where(wu <= 0.0, 1, 2))
            w_p[undecided] = np.clip(wu, 0.0, 1.0)
        warm = ~available
        codes[warm] = SOURCE_CODES[Source.WARMUP]
        w_p[warm] = 1.0 if initial is Source.P else 0.0
    return codes, w_p, both
