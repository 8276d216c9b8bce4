"""Monte Carlo checks of the e-process guarantees on synthetic streams.

Crossings and coverage are evaluated at every full-window step, exactly as
the selection engine evaluates them, so the object under test is the
deployed rolling-window procedure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import special

from ._kernels import window_counts, window_stats
from .errors import ParameterError
from .savi import boundary_half_width, log_threshold, psi_e

CHUNK = 1000


class InsufficientPowerWarning(UserWarning):
    pass


class StreamKind(str, Enum):
    NULL_SYMMETRIC = "null_symmetric"
    CONSTANT_SHIFT = "constant_shift"
    REGIME_SWITCH = "regime_switch"


class Noise(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"
    NONE = "none"


@dataclass(frozen=True)
class SyntheticStreamSpec:
    """Generator description for bounded difference streams.

    Noise families:

    * ``uniform``: ``m_t + (1/2 - |m_t|) * U(-1, 1)``.
    * ``normal``: the bounding transform (sigma = 1) applied to
      ``N(mu_t, normal_scale**2)``, with ``mu_t`` chosen so the bounded value
      has conditional mean exactly ``m_t``. With ``normal_scale = 1`` the
      null stream is uniform in law but produced through the transform;
      larger scales pile mass near +-1/2.
    * ``none``: the constant ``m_t``.

    ``m_t`` is 0 for the null, ``shift`` for a constant shift and
    ``regime_means[k]`` on the k-th segment of a regime switch (alternating
    ``+shift`` / ``-shift`` when ``regime_means`` is not given).
    """

    kind: StreamKind = StreamKind.NULL_SYMMETRIC
    shift: float = 0.0
    switch_points: tuple[int, ...] = ()
    regime_means: Optional[tuple[float, ...]] = None
    length: int = 1000
    replications: int = 10_000
    seed: int = 0
    noise: Noise = Noise.UNIFORM
    normal_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StreamKind(self.kind))
        object.__setattr__(self, "noise", Noise(self.noise))
        object.__setattr__(self, "switch_points", tuple(int(s) for s in self.switch_points))
        if self.regime_means is not None:
            object.__setattr__(self, "regime_means", tuple(float(m) for m in self.regime_means))
        if not abs(self.shift) < 0.5:
            raise ParameterError(f"|shift| must be < 1/2, got {self.shift}")
        if self.length < 1 or self.replications < 1:
            raise ParameterError("length and replications must be positive")
        sp = self.switch_points
        if any(b <= a for a, b in zip(sp, sp[1:])) or any(not 1 <= s <= self.length for s in sp):
            raise ParameterError(f"switch points must be strictly increasing within [1, T], got {sp}")
        if self.regime_means is not None:
            if len(self.regime_means) != len(sp) + 1:
                raise ParameterError("need one regime mean per segment")
            if any(abs(m) >= 0.5 for m in self.regime_means):
                raise ParameterError("regime means must satisfy |m| < 1/2")
        if self.normal_scale <= 0:
            raise ParameterError("normal_scale must be positive")

    def conditional_means(self) -> np.ndarray:
        """True conditional mean of every step (length T)."""
        T = self.length
        if self.kind is StreamKind.NULL_SYMMETRIC:
            return np.zeros(T)
        if self.kind is StreamKind.CONSTANT_SHIFT:
            return np.full(T, self.shift)
        means = self.regime_means
        if means is None:
            means = tuple(self.shift if k % 2 == 0 else -self.shift for k in range(len(self.switch_points) + 1))
        out = np.empty(T)
        # a switch point s means step s (1-based) starts the next regime
        edges = [0] + [s - 1 for s in self.switch_points] + [T]
        for k, m in enumerate(means):
            out[edges[k]:edges[k + 1]] = m
        return out


def generate(spec: SyntheticStreamSpec, rng: np.random.Generator, means: Optional[np.ndarray] = None) -> np.ndarray:
    """One stream of bounded differences."""
    m = spec.conditional_means() if means is None else means
    if spec.noise is Noise.NONE:
        return m.copy()
    if spec.noise is Noise.UNIFORM:
        return m + (0.5 - np.abs(m)) * rng.uniform(-1.0, 1.0, size=m.shape)
    scale = spec.normal_scale
    mu = math.sqrt(1.0 + scale * scale) * math.sqrt(2.0) * special.erfinv(2.0 * m)
    z = rng.normal(mu, scale)
    return np.clip(0.5 * special.erf(z / math.sqrt(2.0)), -0.5, 0.5)


def replication_rngs(seed: int, replications: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(replications)
    return [np.random.default_rng(c) for c in children]


def _batches(spec: SyntheticStreamSpec, window: int, partial: bool = True, chunk: int = CHUNK) -> Iterator[tuple]:
    """Yield ``(sums, v_hat, counts, true_window_means)`` per chunk of replications.

    ``partial`` also evaluates the truncated windows before the first full
    one, as the selection engine does by default.
    """
    if window > spec.length:
        raise ParameterError(f"window {window} longer than stream length {spec.length}")
    if spec.replications < 100:
        warnings.warn(
            f"only {spec.replications} replications; rates will be imprecise",
            InsufficientPowerWarning,
            stacklevel=3,
        )
    means = spec.conditional_means()
    T = spec.length
    counts = window_counts(T, window, partial)
    csum = np.concatenate([[0.0], np.cumsum(means)])
    ends = np.arange(T) + 1 if partial else np.arange(window, T + 1)
    true_means = (csum[ends] - csum[ends - counts.astype(int)]) / counts
    rngs = replication_rngs(spec.seed, spec.replications)
    for start in range(0, spec.replications, chunk):
        block = np.stack([generate(spec, r, means) for r in rngs[start:start + chunk]])
        s, v = window_stats(block, window, partial)
        yield s, v, counts, true_means


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


@dataclass
class FWERResult:
    lam: float
    window: int
    alpha: float
    replications: int
    rate_pq: float
    rate_qp: float
    rate_any: float
    se_nominal: float
    bound: float

    @property
    def se_pq(self) -> float:
        return binomial_se(self.rate_pq, self.replications)

    @property
    def passed(self) -> bool:
        return self.rate_pq <= self.bound and self.rate_qp <= self.bound


@dataclass
class CoverageResult:
    lam: float
    window: int
    alpha: float
    replications: int
    coverage: float
    se_nominal: float
    bound: float
    detection_rate: float = math.nan

    @property
    def passed(self) -> bool:
        return self.coverage >= self.bound


@dataclass
class PowerResult:
    lam: float
    window: int
    alpha: float
    replications: int
    median_delay: float
    fraction_detected: float
    delays: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def _as_list(lams) -> list[float]:
    return [float(lams)] if np.ndim(lams) == 0 else [float(x) for x in lams]


def simulate_fwer_many(spec: SyntheticStreamSpec, lams: Sequence[float], window: int, alpha: float = 0.05,
                       partial: bool = True) -> list[FWERResult]:
    """Per-side crossing rates of 2/alpha for several lambdas on shared streams."""
    lams = _as_list(lams)
    thr = log_threshold(alpha)
    hits_pq = np.zeros(len(lams), dtype=np.int64)
    hits_qp = np.zeros(len(lams), dtype=np.int64)
    hits_any = np.zeros(len(lams), dtype=np.int64)
    for s, v, _, _ in _batches(spec, window, partial):
        for i, lam in enumerate(lams):
            pv = psi_e(lam) * v
            a = np.any(lam * s - pv >= thr, axis=1)
            b = np.any(-lam * s - pv >= thr, axis=1)
            hits_pq[i] += a.sum()
            hits_qp[i] += b.sum()
            hits_any[i] += (a | b).sum()
    n = spec.replications
    se = binomial_se(alpha / 2, n)
    return [
        FWERResult(lam, window, alpha, n, float(hits_pq[i] / n), float(hits_qp[i] / n), float(hits_any[i] / n),
                   se, alpha / 2 + 3 * se)
        for i, lam in enumerate(lams)
    ]


def simulate_fwer(spec: SyntheticStreamSpec, lam: float, window: int, alpha: float = 0.05,
                  partial: bool = True) -> FWERResult:
    """Fraction of null streams on which an e-process ever reaches 2/alpha."""
    if spec.kind is not StreamKind.NULL_SYMMETRIC and np.any(spec.conditional_means() != 0):
        raise ParameterError("FWER simulation needs a zero-mean stream")
    return simulate_fwer_many(spec, [lam], window, alpha, partial)[0]


def simulate_coverage_many(spec: SyntheticStreamSpec, lams: Sequence[float], window: int, alpha: float = 0.05,
                           partial: bool = True) -> list[CoverageResult]:
    lams = _as_list(lams)
    if any(lam <= 0 for lam in lams):
        raise ParameterError("coverage needs lambda > 0")
    covered = np.zeros(len(lams), dtype=np.int64)
    detected = np.zeros(len(lams), dtype=np.int64)
    for s, v, counts, true_means in _batches(spec, window, partial):
        centers = s / counts
        for i, lam in enumerate(lams):
            half = boundary_half_width(v, counts, lam, alpha)
            inside = np.abs(centers - true_means) <= half
            covered[i] += np.all(inside, axis=1).sum()
            detected[i] += np.any(np.abs(centers) > half, axis=1).sum()
    n = spec.replications
    se = binomial_se(1 - alpha, n)
    return [
        CoverageResult(lam, window, alpha, n, float(covered[i] / n), se, 1 - alpha - 3 * se, float(detected[i] / n))
        for i, lam in enumerate(lams)
    ]


def simulate_coverage(spec: SyntheticStreamSpec, lam: float, window: int, alpha: float = 0.05,
                      partial: bool = True) -> CoverageResult:
    """Fraction of streams whose true window mean stays inside every band.

    ``detection_rate`` is the fraction of streams on which some band
    excludes zero.
    """
    return simulate_coverage_many(spec, [lam], window, alpha, partial)[0]


def simulate_power(spec: SyntheticStreamSpec, lam: float, window: int, alpha: float = 0.05,
                   partial: bool = True) -> PowerResult:
    """Median first step at which the correctly oriented e-process crosses.

    A positive shift makes P worse, so the e-process against H0(p, q) is
    watched; a negative shift watches the other side. Streams that never
    cross count as ``inf``.
    """
    if spec.kind is not StreamKind.CONSTANT_SHIFT:
        raise ParameterError("power simulation needs a constant-shift stream")
    thr = log_threshold(alpha)
    sign = 1.0 if spec.shift >= 0 else -1.0
    delays = []
    offset = 1 if partial else window
    for s, v, _, _ in _batches(spec, window, partial):
        log_e = sign * lam * s - psi_e(lam) * v
        hit = log_e >= thr
        first = np.where(hit.any(axis=1), hit.argmax(axis=1) + offset, np.inf)
        delays.append(first)
    d = np.concatenate(delays)
    return PowerResult(lam, window, alpha, spec.replications, float(np.median(d)), float(np.mean(np.isfinite(d))), d)


DEFAULT_LAMS = (0.1, 0.5, 0.9)
DEFAULT_WINDOWS = (96, 672)


def run_validation_suite(
    replications: int = 10_000,
    length: int = 1000,
    lams: Sequence[float] = DEFAULT_LAMS,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    alpha: float = 0.05,
    seed: int = 0,
    shift: float = 0.1,
    stress_scale: Optional[float] = None,
    partial: bool = True,
) -> dict:
    """FWER and coverage over the lambda x window grid, both noise families.

    Coverage is checked on constant-shift streams (both families) and on a
    uniform-noise regime switch. ``stress_scale`` adds non-gating entries for
    a normal family with that scale; overlapping windows are each e-values but
    their union is not, so heavy near-boundary mass can push the rolling
    crossing rate past alpha/2. ``partial`` includes the truncated windows
    at the start of each stream. Returns a JSON-ready report whose
    ``passed`` flag covers the gating entries only.
    """
    lams = [float(x) for x in lams]
    windows = [int(w) for w in windows]
    report = {
        "alpha": alpha,
        "replications": replications,
        "length": length,
        "seed": seed,
        "partial_windows": partial,
        "fwer": [],
        "coverage": [],
    }
    null_specs = [
        SyntheticStreamSpec(StreamKind.NULL_SYMMETRIC, length=length, replications=replications,
                            seed=seed, noise=Noise.UNIFORM),
        SyntheticStreamSpec(StreamKind.NULL_SYMMETRIC, length=length, replications=replications,
                            seed=seed + 1, noise=Noise.NORMAL),
    ]
    third = length // 3
    cov_specs = [
        ("constant_shift", SyntheticStreamSpec(StreamKind.CONSTANT_SHIFT, shift=shift, length=length,
                                               replications=replications, seed=seed + 10, noise=Noise.UNIFORM)),
        ("constant_shift", SyntheticStreamSpec(StreamKind.CONSTANT_SHIFT, shift=shift, length=length,
                                               replications=replications, seed=seed + 11, noise=Noise.NORMAL)),
        ("regime_switch", SyntheticStreamSpec(StreamKind.REGIME_SWITCH, shift=shift,
                                              switch_points=(third + 1, 2 * third + 1), length=length,
                                              replications=replications, seed=seed + 12, noise=Noise.UNIFORM)),
    ]
    _fill(report, null_specs, cov_specs, lams, windows, alpha, partial, gating=True)
    if stress_scale is not None:
        stress_null = [SyntheticStreamSpec(StreamKind.NULL_SYMMETRIC, length=length, replications=replications,
                                           seed=seed + 20, noise=Noise.NORMAL, normal_scale=stress_scale)]
        stress_cov = [("constant_shift", SyntheticStreamSpec(
            StreamKind.CONSTANT_SHIFT, shift=shift, length=length, replications=replications,
            seed=seed + 21, noise=Noise.NORMAL, normal_scale=stress_scale))]
        _fill(report, stress_null, stress_cov, lams, windows, alpha, partial, gating=False)
    report["passed"] = all(e["passed"] for e in report["fwer"] + report["coverage"] if e["gating"])
    return report


def _fill(report, null_specs, cov_specs, lams, windows, alpha, partial, gating):
    for spec in null_specs:
        for w in windows:
            for r in simulate_fwer_many(spec, lams, w, alpha, partial):
                report["fwer"].append({
                    "noise": spec.noise.value, "normal_scale": spec.normal_scale, "lam": r.lam, "window": w,
                    "rate_pq": r.rate_pq, "rate_qp": r.rate_qp, "rate_any": r.rate_any,
                    "se": r.se_nominal, "bound": r.bound, "passed": bool(r.passed), "gating": gating,
                })
    for label, spec in cov_specs:
        for w in windows:
            for r in simulate_coverage_many(spec, lams, w, alpha, partial):
                report["coverage"].append({
                    "kind": label, "noise": spec.noise.value, "normal_scale": spec.normal_scale,
                    "shift": spec.shift, "lam": r.lam, "window": w,
                    "coverage": r.coverage, "se": r.se_nominal, "bound": r.bound,
                    "detection_rate": r.detection_rate, "passed": bool(r.passed), "gating": gating,
                })
