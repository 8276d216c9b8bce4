"""Sigmoid bounding of raw score differences and its inverse.

The bounding map is ``f(x) = Phi(x / sigma) - 1/2``, written here as
``erf(x / (sigma * sqrt(2))) / 2`` so that small arguments keep full
relative precision (subtracting 1/2 from Phi would cancel them away).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DataError, DegenerateScaleError, OutOfRangeError, ParameterError

#: One week at 15-minute resolution.
DEFAULT_CALIBRATION_LENGTH = 7 * 96

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TransformSpec:
    sigma: float
    calibration_length: int = DEFAULT_CALIBRATION_LENGTH

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive and finite, got {self.sigma}")
        if self.calibration_length < 2:
            raise ParameterError(f"calibration_length must be >= 2, got {self.calibration_length}")


def normal_cdf(z):
    """Standard normal CDF, accurate to ~1e-16 absolute."""
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / _SQRT2)


def calibrate_scale(delta_hat, calibration_length: int = DEFAULT_CALIBRATION_LENGTH) -> TransformSpec:
    """Estimate sigma as the sample SD (ddof=1) of the first differences."""
    if calibration_length < 2:
        raise ParameterError(f"calibration_length must be >= 2, got {calibration_length}")
    head = np.asarray(delta_hat, dtype=float)[:calibration_length]
    if head.size < calibration_length:
        raise ParameterError(
            f"need {calibration_length} differences for calibration, only {head.size} available"
        )
    if not np.all(np.isfinite(head)):
        raise DataError("non-finite value in calibration window")
    sigma = float(np.std(head, ddof=1))
    if sigma == 0.0:
        raise DegenerateScaleError("calibration differences are all identical; sigma would be 0")
    return TransformSpec(sigma=sigma, calibration_length=calibration_length)


def bound(x, spec: TransformSpec):
    """Map Watts into (-1/2, 1/2). Works elementwise on arrays."""
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DataError("bound received a non-finite value")
    out = 0.5 * special.erf(xa / (spec.sigma * _SQRT2))
    return float(out) if out.ndim == 0 else out


def unbound(d, spec: TransformSpec):
    """Inverse of :func:`bound`; raises for ``|d| >= 1/2``."""
    da = np.asarray(d, dtype=float)
    if not np.all(np.abs(da) < 0.5):
        raise OutOfRangeError("back-transform needs |d| < 1/2")
    out = spec.sigma * _SQRT2 * special.erfinv(2.0 * da)
    return float(out) if out.ndim == 0 else out
