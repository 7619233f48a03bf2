"""Group penalties (SCAD, lasso) and their single-group proximal maps."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError

PENALTIES = ("scad", "lasso")


@dataclass(frozen=True)
class PenaltySpec:
    family: str = "scad"
    lam: float = 0.0
    a: float = 3.7

    def __post_init__(self):
        if self.family not in PENALTIES:
            raise DataValidationError(f"unknown penalty {self.family!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise DataValidationError(f"lambda must be finite and nonnegative, got {self.lam}")
        if self.family == "scad" and not self.a > 2:
            raise DataValidationError(f"SCAD shape a must exceed 2, got {self.a}")

    def with_lambda(self, lam):
        return PenaltySpec(self.family, float(lam), self.a)

    def value(self, t):
        if self.family == "lasso":
            return self.lam * _nonneg(t)
        return scad_value(t, self.lam, self.a)

    def deriv(self, t):
        if self.family == "lasso":
            return np.full(np.shape(_nonneg(t)), self.lam) if np.ndim(t) else self.lam
        return scad_deriv(t, self.lam, self.a)


def _nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataValidationError("penalty argument must be nonnegative")
    return t if t.ndim else float(t)


def scad_value(t, lam, a=3.7):
    t = _nonneg(t)
    out = np.where(
        t <= lam, lam * t,
        np.where(t <= a * lam,
                 (2 * a * lam * t - t ** 2 - lam ** 2) / (2 * (a - 1)),
                 lam ** 2 * (a + 1) / 2))
    return out if out.ndim else float(out)


def scad_deriv(t, lam, a=3.7):
    t = _nonneg(t)
    out = lam * np.where(t <= lam, 1.0, np.maximum(a * lam - t, 0.0) / ((a - 1) * lam)
                         if lam > 0 else 0.0)
    return out if out.ndim else float(out)


def group_threshold(z, lam, a=3.7, family="scad", v=1.0):
    """Minimize ``(v/2)||theta - z||^2 + penalty(||theta||)`` over ``theta``.

    The minimizer is a nonnegative multiple of ``z``.  For SCAD it is unique
    only when ``v > 1 / (a - 1)``.  Boundary ties go to the lower branch.
    """
    z = np.asarray(z, dtype=float)
    if not v > 0:
        raise DataValidationError("curvature v must be positive")
    if family not in PENALTIES:
        raise DataValidationError(f"unknown penalty {family!r}")
    if family == "scad" and v * (a - 1) <= 1:
        raise DataValidationError("SCAD threshold needs v > 1/(a-1)")
    r = math.hypot(*z.ravel())     # no underflow for tiny entries
    t = threshold_radius(r, float(lam), float(a), PENALTIES.index(family), float(v))
    if t == 0.0:
        return np.zeros_like(z)
    return z * (t / r)


def threshold_radius(r, lam, a, code, v):
    """Norm of the thresholded group for input norm ``r``.

    ``code`` is 0 for SCAD and 1 for lasso.  Written in plain scalar Python so
    the compiled solver kernel can reuse it verbatim.
    """
    if r <= 0.0:
        return 0.0
    if code == 1 or r <= lam * (1.0 + 1.0 / v):
        return max(r - lam / v, 0.0)
    if r <= a * lam:
        return ((a - 1.0) * v * r - a * lam) / ((a - 1.0) * v - 1.0)
    return r
