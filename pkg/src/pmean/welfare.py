"""Generalized-mean (p-mean) welfare for exponents in [-inf, 1]."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from pmean.errors import DomainError, StructuralError

NASH_SNAP = 1e-9
NEG_INFINITY = float("-inf")

ALIASES = {
    "nsw": 0.0,
    "nash": 0.0,
    "egal": NEG_INFINITY,
    "-inf": NEG_INFINITY,
    "util": 1.0,
}


@dataclass(frozen=True)
class Exponent:
    """Welfare exponent ``p``.

    Nash (``p = 0``) and egalitarian (``p = -inf``) are exact values, not
    approximations; any finite ``|p| < 1e-9`` is snapped to 0.
    """

    value: float

    def __post_init__(self):
        p = float(self.value)
        if math.isnan(p) or p > 1:
            raise DomainError(f"exponent must lie in [-inf, 1], got {self.value!r}")
        if abs(p) < NASH_SNAP:
            p = 0.0
        object.__setattr__(self, "value", p)

    @classmethod
    def nash(cls) -> "Exponent":
        return cls(0.0)

    @classmethod
    def egalitarian(cls) -> "Exponent":
        return cls(NEG_INFINITY)

    @classmethod
    def parse(cls, text: str) -> "Exponent":
        """Parse a decimal, a fraction ``a/b``, or one of the aliases nsw/egal/-inf/util."""
        key = text.strip().lower()
        if key in ALIASES:
            return cls(ALIASES[key])
        if key in ("inf", "+inf"):
            raise DomainError("p = +inf is outside [-inf, 1]")
        try:
            if "/" in key:
                num, den = key.split("/", 1)
                return cls(float(num) / float(den))
            return cls(float(key))
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"cannot parse exponent {text!r}") from exc

    @property
    def is_nash(self) -> bool:
        return self.value == 0.0

    @property
    def is_egalitarian(self) -> bool:
        return self.value == NEG_INFINITY

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        if self.is_egalitarian:
            return "-inf"
        return repr(self.value)


PLike = Union[Exponent, float, int, str]


def as_exponent(p: PLike) -> Exponent:
    if isinstance(p, Exponent):
        return p
    if isinstance(p, str):
        return Exponent.parse(p)
    return Exponent(float(p))


def p_mean_rows(values: np.ndarray, p: PLike) -> np.ndarray:
    """Row-wise p-mean of a 2-D array of nonnegative values."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[1] == 0:
        raise StructuralError(f"expected a non-empty 2-D array, got shape {v.shape}")
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise DomainError("p-mean is defined for nonnegative values only")
    p = as_exponent(p).value
    if p == NEG_INFINITY:
        return v.min(axis=1)
    has_zero = (v == 0).any(axis=1)
    out = np.zeros(v.shape[0])
    if p <= 0:
        rows = ~has_zero
        if not rows.any():
            return out
        v = v[rows]
    else:
        rows = slice(None)
    # scale by m so that (v/m)^p <= 1: the max for p > 0, the min for p < 0
    peak = v.max(axis=1) if p >= 0 else v.min(axis=1)
    safe_peak = np.where(peak > 0, peak, 1.0)
    with np.errstate(divide="ignore"):
        logr = np.log(v / safe_peak[:, None])
    if p == 0:
        res = safe_peak * np.exp(logr.mean(axis=1))
    else:
        # m * (mean (v/m)^p)^(1/p), via expm1/log1p so small |p| keeps precision
        with np.errstate(invalid="ignore", divide="ignore"):
            inner = np.expm1(p * logr).mean(axis=1)
            res = safe_peak * np.exp(np.log1p(inner) / p)
        res = np.where(peak > 0, res, 0.0)
    out[rows] = res
    return out


def p_mean(values, p: PLike) -> float:
    """Generalized mean ``((1/n) sum v_i^p)^(1/p)`` with the p=0 and p=-inf limits.

    For ``p <= 0`` a zero coordinate makes the mean 0 (the limiting value).

    >>> p_mean([0.2, 0.4], 1)
    0.30000000000000004
    >>> p_mean([0.25, 1.0], 0)
    0.5
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise StructuralError(f"expected a non-empty vector, got shape {v.shape}")
    return float(p_mean_rows(v[None, :], p)[0])


def welfare_ratio(reference: float, achieved: float) -> float:
    """``reference / achieved``; ``+inf`` when only ``achieved`` is zero, 1 when both are."""
    if reference < 0 or achieved < 0:
        raise DomainError("welfare values must be nonnegative")
    if achieved == 0:
        return 1.0 if reference == 0 else math.inf
    return reference / achieved
