"""Monte Carlo run-length engine.

Replication ``i`` of a run seeded with ``seed`` draws from its own Philox
stream: the key is derived from ``seed`` and the counter starts at ``i`` in
its top word, so streams never overlap and a replication's draws do not depend
on which worker or batch runs it. Replications are advanced together in
blocks of periods; every live replication consumes the same block schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .chart import ChartParams, variance_sequence
from .distributions import DistributionSpec, calibrate_shift, open_uniforms, sample_counts

ARL0_CAP = 250_000
ARL1_CAP = 50_000

_FIRST_BLOCK = 16
_MAX_BLOCK = 4096
_BATCH = 1024


@dataclass(frozen=True)
class RunLengthSummary:
    """Mean run length with dispersion and censoring diagnostics.

    Censored replications (no signal by ``cap``) count as ``cap``, so ``arl``
    is a lower bound whenever ``n_censored > 0``.
    """

    arl: float
    sd: float
    se: float
    n_reps: int
    cap: int
    n_censored: int
    seed: int

    @classmethod
    def from_run_lengths(cls, rl: np.ndarray, cap: int, seed: int) -> "RunLengthSummary":
        n = int(rl.size)
        arl = float(rl.mean())
        sd = float(rl.std(ddof=1)) if n > 1 else 0.0
        return cls(arl, sd, sd / math.sqrt(n), n, int(cap), int((rl >= cap).sum()), int(seed))


def derive_seed(seed: int, *tags) -> int:
    """A 64-bit seed derived from ``seed`` and integer/string tags."""
    words = [int(seed)]
    for tag in tags:
        if isinstance(tag, str):
            words.extend(tag.encode())
        else:
            words.append(int(tag))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    key = np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(counter=[0, 0, 0, int(rep)], key=key))


def make_spec(family: str, delta: float, p0: float = 0.5) -> DistributionSpec:
    if family == "direct":
        if not 0.0 <= delta <= 1.0 - p0:
            raise ValueError(f"delta must lie in [0, {1.0 - p0}], got {delta!r}")
        return DistributionSpec("direct", 0.0, p0 + delta, 0.5)
    if p0 != 0.5:
        raise ValueError("continuous families are calibrated for p0 = 0.5 only")
    return calibrate_shift(family, delta)


class _Limits:
    """Centre and half-width of the control limits for t = 1..n, grown on demand."""

    def __init__(self, params: ChartParams, n: int):
        self.params = params
        self.n = 0
        self._grow(n)

    def _grow(self, n: int):
        p = self.params
        self.half = p.limit * np.sqrt(variance_sequence(p.lam, n))
        self.center = p.r0 * np.cumprod(np.full(n, 1.0 - p.lam))
        self.n = n

    def window(self, start: int, stop: int):
        if stop > self.n:
            self._grow(max(stop, 2 * self.n))
        return self.center[start:stop], self.half[start:stop]


def _draw_block(rng: np.random.Generator, spec: DistributionSpec, k: int, size: int) -> np.ndarray:
    if spec.family == "direct":
        return rng.binomial(k, spec.p1, size=size)
    return sample_counts(spec, k, open_uniforms(rng, (size, k)))


def _run_batch(params: ChartParams, spec: DistributionSpec, rngs, cap: int,
               limits: _Limits | None = None) -> np.ndarray:
    n = len(rngs)
    k, lam, p0 = params.k, params.lam, params.p0
    if limits is None:
        limits = _Limits(params, min(cap, 1024))
    rl = np.full(n, cap, dtype=np.int64)
    alive = np.arange(n)
    Q = np.zeros(n, dtype=np.int64)
    r = np.full(n, params.r0, dtype=float)
    t = 0
    block = _FIRST_BLOCK
    while alive.size and t < cap:
        size = min(block, cap - t)
        counts = np.stack([_draw_block(rngs[i], spec, k, size) for i in alive])
        tt = np.arange(t + 1, t + size + 1, dtype=float)
        Qm = Q[alive, None] + np.cumsum(counts, axis=1)
        W = (Qm - k * p0 * tt) / np.sqrt(k * p0 * (1.0 - p0) * tt)
        zi = ((1.0 - lam) * r[alive])[:, None]
        rm, _ = lfilter([lam], [1.0, -(1.0 - lam)], W, axis=1, zi=zi)
        center, half = limits.window(t, t + size)
        out = (rm > center + half) | (rm < center - half)
        hit = out.any(axis=1)
        rl[alive[hit]] = t + 1 + np.argmax(out[hit], axis=1)
        keep = ~hit
        Q[alive[keep]] = Qm[keep, -1]
        r[alive[keep]] = rm[keep, -1]
        alive = alive[keep]
        t += size
        block = min(2 * block, _MAX_BLOCK)
    return rl


def run_length(params: ChartParams, spec: DistributionSpec, rng: np.random.Generator,
               cap: int = ARL1_CAP) -> int:
    """First period whose EWMA falls outside its limits, or ``cap`` if none."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return int(_run_batch(params, spec, [rng], cap)[0])


def _run_chunk(args) -> np.ndarray:
    params, spec, seed, start, stop, cap = args
    limits = _Limits(params, min(cap, 1024))
    rngs = [replication_rng(seed, i) for i in range(start, stop)]
    return _run_batch(params, spec, rngs, cap, limits)


def simulate_run_lengths(params: ChartParams, spec: DistributionSpec, n_reps: int,
                         cap: int, seed: int, workers: int = 1) -> np.ndarray:
    """Run lengths of replications 0..n_reps-1, in replication order."""
    if n_reps < 1:
        raise ValueError(f"n_reps must be >= 1, got {n_reps}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    chunks = [(params, spec, seed, s, min(s + _BATCH, n_reps), cap)
              for s in range(0, n_reps, _BATCH)]
    if workers <= 1 or len(chunks) == 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    return np.concatenate(parts)


def estimate_arl(params: ChartParams, delta: float = 0.0, family: str = "direct",
                 n_reps: int = 10_000, cap: int | None = None, seed: int = 0,
                 workers: int = 1, spec: DistributionSpec | None = None) -> RunLengthSummary:
    """Zero-state ARL estimate (shift, if any, active from period 1).

    ``cap`` defaults to 250,000 periods in control and 50,000 under a shift.
    Results depend only on (params, shift, family, n_reps, cap, seed).
    """
    if spec is None:
        spec = make_spec(family, delta, params.p0)
    if cap is None:
        cap = ARL0_CAP if spec.p1 == params.p0 else ARL1_CAP
    rl = simulate_run_lengths(params, spec, n_reps, cap, seed, workers)
    return RunLengthSummary.from_run_lengths(rl, cap, seed)


def simulate_paths(params: ChartParams, spec: DistributionSpec, n_reps: int, periods,
                   seed: int) -> dict[str, np.ndarray]:
    """Uncensored W_t and r_t at the given periods, shape ``(n_reps, len(periods))``."""
    periods = np.asarray(periods, dtype=int)
    if periods.size == 0 or periods.min() < 1:
        raise ValueError("periods must be positive")
    n_periods = int(periods.max())
    k, p0, lam = params.k, params.p0, params.lam
    tt = np.arange(1, n_periods + 1, dtype=float)
    W_out = np.empty((n_reps, periods.size))
    r_out = np.empty((n_reps, periods.size))
    for start in range(0, n_reps, _BATCH):
        stop = min(start + _BATCH, n_reps)
        counts = np.stack([_draw_block(replication_rng(seed, i), spec, k, n_periods)
                           for i in range(start, stop)])
        W = (counts.cumsum(axis=1) - k * p0 * tt) / np.sqrt(k * p0 * (1.0 - p0) * tt)
        zi = np.full((stop - start, 1), (1.0 - lam) * params.r0)
        r, _ = lfilter([lam], [1.0, -(1.0 - lam)], W, axis=1, zi=zi)
        W_out[start:stop] = W[:, periods - 1]
        r_out[start:stop] = r[:, periods - 1]
    return {"W": W_out, "r": r_out}
