"""Shifted continuous families calibrated to a target exceedance probability.

Every family is sampled by inverse CDF from caller-supplied uniforms. With the
location shift chosen so that P(Y + s >= median0) = p1, the indicator
I(F^-1(u) + s >= median0) equals I(u >= 1 - p1) for every family, so the
same uniforms give the same indicators whatever the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

FAMILIES = ("normal", "laplace", "uniform", "exponential", "direct")
CONTINUOUS_FAMILIES = FAMILIES[:4]

# in-control median of each family's canonical parameterization
_MEDIANS = {
    "normal": 0.0,
    "laplace": 0.0,
    "uniform": 0.5,
    "exponential": math.log(2.0),
    "direct": 0.5,
}


@dataclass(frozen=True)
class ShiftScenario:
    delta: float
    p0: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0 - self.p0:
            raise ValueError(f"delta must lie in [0, {1.0 - self.p0}], got {self.delta!r}")

    @property
    def p1(self) -> float:
        return self.p0 + self.delta


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    location_shift: float
    p1: float
    median0: float


def calibrate_shift(family: str, delta: float) -> DistributionSpec:
    """Location shift giving exceedance probability 0.5 + delta over the median.

    Canonical in-control forms: standard normal, Laplace(0, 1), Uniform(0, 1)
    and Exponential(1). ``direct`` draws counts straight from Binomial(k, p1).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 0.5], got {delta!r}")
    # exponential reaches p1 = 1 with the finite shift ln 2; these two cannot
    if delta == 0.5 and family in ("normal", "laplace"):
        raise ValueError(
            f"delta=0.5 needs an infinite shift for the {family} family; "
            "use family 'direct' for p1 = 1"
        )
    if family == "normal":
        s = float(ndtri(0.5 + delta))
    elif family == "laplace":
        s = -math.log1p(-2.0 * delta)
    elif family == "exponential":
        s = math.log1p(2.0 * delta)
    elif family == "uniform":
        s = float(delta)
    else:
        s = 0.0
    return DistributionSpec(family, s, 0.5 + delta, _MEDIANS[family])


def quantile(family: str, u):
    """Inverse CDF of the in-control form of ``family`` (u in (0, 1))."""
    u = np.asarray(u, dtype=float)
    if family == "normal":
        return ndtri(u)
    if family == "laplace":
        return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))
    if family == "uniform":
        return u
    if family == "exponential":
        return -np.log1p(-u)
    raise ValueError(f"no quantile function for family {family!r}")


def indicators(spec: DistributionSpec, uniforms) -> np.ndarray:
    """Dichotomized observations generated from ``uniforms`` (any shape)."""
    u = np.asarray(uniforms, dtype=float)
    if spec.family == "direct":
        return (u >= 1.0 - spec.p1).astype(np.int8)
    with np.errstate(divide="ignore"):
        y = quantile(spec.family, u) + spec.location_shift
    return (y >= spec.median0).astype(np.int8)


def sample_period(spec: DistributionSpec, k: int, uniforms) -> int:
    """One period count from k standard uniforms."""
    u = np.asarray(uniforms, dtype=float)
    if u.shape != (k,):
        raise ValueError(f"expected {k} uniforms, got shape {u.shape}")
    return int(indicators(spec, u).sum())


def sample_counts(spec: DistributionSpec, k: int, uniforms) -> np.ndarray:
    """Period counts from a ``(n_periods, k)`` block of uniforms."""
    u = np.asarray(uniforms, dtype=float)
    if u.ndim != 2 or u.shape[1] != k:
        raise ValueError(f"expected uniforms of shape (n, {k}), got {u.shape}")
    return indicators(spec, u).sum(axis=1, dtype=np.int64)


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) * 2.0**-53
