"""Cumulative standardized binomial EWMA chart for k parallel binary streams.

Each period every stream contributes one observation, dichotomized against the
known in-control median. The chart accumulates the exceedance count over all
streams and periods, standardizes it, smooths it with an EWMA and compares the
result against limits built from the exact (time-varying) variance of the EWMA
statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class ChartParams:
    """Static chart configuration.

    Args:
        k: number of streams.
        lam: EWMA smoothing constant, 0 < lam <= 1.
        limit: control limit multiplier L (in exact standard deviations of r_t).
        p0: in-control exceedance probability.
        median0: in-control median used for dichotomization.
        r0: starting value of the EWMA statistic.
    """

    k: int
    lam: float
    limit: float
    p0: float = 0.5
    median0: float = 0.0
    r0: float = 0.0

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must lie in (0, 1], got {self.lam!r}")
        if not (math.isfinite(self.limit) and self.limit > 0):
            raise ValueError(f"limit must be positive, got {self.limit!r}")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0!r}")
        if not (math.isfinite(self.median0) and math.isfinite(self.r0)):
            raise ValueError("median0 and r0 must be finite")
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True)
class ChartState:
    """Chart statistics after period ``t``.

    ``cross_acc`` is the running weighted sum of sqrt(j) over past periods that
    lets the exact variance advance in O(1); ``decay`` is (1 - lam)**t kept
    multiplicatively. ``signal_t`` is the first period that signalled, if any.
    """

    t: int = 0
    Q: int = 0
    W: float = 0.0
    r: float = 0.0
    var_r: float = 0.0
    cross_acc: float = 0.0
    decay: float = 1.0
    lcl: float = 0.0
    ucl: float = 0.0
    signaled: bool = False
    signal_t: int | None = None


def initial_state(params: ChartParams) -> ChartState:
    return ChartState(r=params.r0, lcl=params.r0, ucl=params.r0)


def dichotomize(y: float, median0: float) -> int:
    """Return 1 if ``y >= median0`` else 0; ties count as exceedances."""
    if not (math.isfinite(y) and math.isfinite(median0)):
        raise ValueError(f"non-finite input: y={y!r}, median0={median0!r}")
    return 1 if y >= median0 else 0


def period_count(indicators: Sequence[int], k: int) -> int:
    if len(indicators) != k:
        raise ValueError(f"expected {k} indicators, got {len(indicators)}")
    if any(x not in (0, 1) for x in indicators):
        raise ValueError("indicators must be 0 or 1")
    return int(sum(indicators))


def standardize(Q: int, t: int, params: ChartParams) -> float:
    """Standardized cumulative count (Q - k p0 t) / sqrt(k p0 (1 - p0) t)."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if not 0 <= Q <= params.k * t:
        raise ValueError(f"Q={Q} outside [0, {params.k * t}]")
    k, p0 = params.k, params.p0
    return (Q - k * p0 * t) / math.sqrt(k * p0 * (1.0 - p0) * t)


def ewma_update(r_prev: float, W: float, lam: float) -> float:
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must lie in (0, 1], got {lam!r}")
    return lam * W + (1.0 - lam) * r_prev


def variance_exact_direct(lam: float, t: int) -> float:
    """Exact Var(r_t) from the O(t^2) double sum.

    Var(r_t) = lam^2 [ 2 sum_{j<i<=t} q^(2t-i-j) sqrt(j/i) + sum_{i<=t} q^(2t-2i) ]
    with q = 1 - lam and 0**0 == 1. Kept as a reference; the chart itself
    uses :func:`variance_step`.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must lie in (0, 1], got {lam!r}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    q = 1.0 - lam
    i = np.arange(1, t + 1, dtype=float)
    sqrt_i = np.sqrt(i)
    diag = float(np.sum(q ** (2 * t - 2 * i)))
    if t <= 1024:
        # cross terms j < i as a strictly-upper-triangular matrix (rows j, cols i);
        # q^(2t-i-j) factors as q^(t-j) * q^(t-i)
        w = q ** (t - i)
        terms = np.outer(w * sqrt_i, w / sqrt_i)
        cross = float(np.sum(np.triu(terms, k=1)))
    else:
        cross = 0.0
        for j in range(1, t):
            ii = i[j:]
            cross += float(np.sum(q ** (2 * t - ii - j) * (math.sqrt(j) / sqrt_i[j:])))
    return lam * lam * (2.0 * cross + diag)


def variance_step(var_prev: float, cross_prev: float, t: int, lam: float) -> tuple[float, float]:
    """Advance the exact variance from period ``t - 1`` to ``t``.

    Uses V_t = q^2 V_{t-1} + lam^2 (1 + 2 B_t / sqrt(t)) with
    B_t = q (B_{t-1} + sqrt(t - 1)) and B_1 = 0.

    Returns:
        (V_t, B_t)
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    q = 1.0 - lam
    cross = q * (cross_prev + math.sqrt(t - 1)) if t > 1 else 0.0
    var = q * q * var_prev + lam * lam * (1.0 + 2.0 * cross / math.sqrt(t))
    return var, cross


def variance_sequence(lam: float, n: int) -> np.ndarray:
    """Exact Var(r_t) for t = 1..n as an array (same recurrence, vectorized)."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must lie in (0, 1], got {lam!r}")
    if n < 1:
        return np.empty(0)
    q = 1.0 - lam
    sqrt_t = np.sqrt(np.arange(1, n + 1, dtype=float))
    cross = lfilter([0.0, q], [1.0, -q], sqrt_t)
    return lfilter([lam * lam], [1.0, -q * q], 1.0 + 2.0 * cross / sqrt_t)


def control_limits(t: int, var_r: float, params: ChartParams) -> tuple[float, float]:
    """Return ``(lcl, ucl)`` centred on (1 - lam)**t * r0."""
    if var_r < 0:
        raise ValueError(f"var_r must be nonnegative, got {var_r!r}")
    center = (1.0 - params.lam) ** t * params.r0
    half = params.limit * math.sqrt(var_r)
    return center - half, center + half


def step(state: ChartState, c: int, params: ChartParams) -> ChartState:
    """Consume one period count and return the next state.

    Stepping past a signal is allowed; ``signal_t`` keeps the first one.
    """
    if isinstance(c, bool) or int(c) != c or not 0 <= c <= params.k:
        raise ValueError(f"period count {c!r} outside [0, {params.k}]")
    t = state.t + 1
    Q = state.Q + int(c)
    W = standardize(Q, t, params)
    r = ewma_update(state.r, W, params.lam)
    var_r, cross = variance_step(state.var_r, state.cross_acc, t, params.lam)
    decay = state.decay * (1.0 - params.lam)
    half = params.limit * math.sqrt(var_r)
    center = decay * params.r0
    lcl, ucl = center - half, center + half
    out = r < lcl or r > ucl
    signal_t = state.signal_t
    if out and signal_t is None:
        signal_t = t
    return replace(
        state, t=t, Q=Q, W=W, r=r, var_r=var_r, cross_acc=cross, decay=decay,
        lcl=lcl, ucl=ucl, signaled=state.signaled or out, signal_t=signal_t,
    )


class CSBEWMAChart:
    """Stateful convenience wrapper around :func:`step`."""

    def __init__(self, params: ChartParams):
        self.params = params
        self.state = initial_state(params)

    def update_count(self, c: int) -> ChartState:
        self.state = step(self.state, c, self.params)
        return self.state

    def update(self, observations: Sequence[float]) -> ChartState:
        """Dichotomize one period of k raw observations and step the chart."""
        ind = [dichotomize(float(y), self.params.median0) for y in observations]
        return self.update_count(period_count(ind, self.params.k))

    def run(self, counts) -> list[ChartState]:
        return [self.update_count(int(c)) for c in counts]
