"""Calibration of (lambda, L) to a target ARL0, ARL1 profiling and CV analysis."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .chart import ChartParams
from .distributions import CONTINUOUS_FAMILIES, FAMILIES
from .simulation import ARL0_CAP, ARL1_CAP, RunLengthSummary, derive_seed, estimate_arl, make_spec

DELTA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 11))

# recommended starting points per target ARL0
DEFAULTS = {370: (0.2, 1.4), 500: (0.15, 1.55)}


def frange(start: float, stop: float, step: float) -> list[float]:
    """Inclusive float grid rounded to avoid accumulation error."""
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 10) for i in range(n + 1)]


LAMBDA_GRID = tuple(frange(0.10, 0.90, 0.025))
LIMIT_GRID = tuple(frange(1.00, 2.50, 0.025))


@dataclass(frozen=True)
class GridSearchRow:
    lam: float
    limit: float
    achieved_arl0: float
    se: float
    target: float
    k: int
    sd: float
    n_reps: int
    n_censored: int
    cap: int
    seed: int


@dataclass(frozen=True)
class Arl1Cell:
    lam: float
    limit: float
    delta: float
    family: str
    arl1: float
    se: float
    k: int
    sd: float
    n_reps: int
    n_censored: int
    cap: int
    seed: int


@dataclass(frozen=True)
class CvRow:
    delta: float
    mean_arl1: float
    sd_arl1: float
    cv: float


def lambda_bucket(lam: float) -> float:
    """Lower edge of the 0.1-wide lambda bucket; 1.0 joins the top bucket."""
    return min(math.floor(lam * 10 + 1e-9), 9) / 10


def _row(lam, limit, s: RunLengthSummary, target, k) -> GridSearchRow:
    return GridSearchRow(lam, limit, s.arl, s.se, float(target), k, s.sd, s.n_reps,
                         s.n_censored, s.cap, s.seed)


def calibrate_limit(target: float, lam: float, limit_grid=LIMIT_GRID, k: int = 10,
                    n_reps: int = 10_000, seed: int = 0, cap: int = ARL0_CAP,
                    workers: int = 1, exhaustive: bool = False):
    """Limit on ``limit_grid`` whose ARL0 is closest to ``target`` for one lambda.

    Every cell reuses ``seed``, so each replication's run length is
    nondecreasing in L and the estimated ARL0 is exactly monotone along the
    grid. Bisection therefore finds the same cell as an exhaustive scan.

    Returns:
        (best GridSearchRow, dict of every evaluated limit -> GridSearchRow)
    """
    grid = sorted(limit_grid)
    if not grid:
        raise ValueError("limit grid is empty")
    cache: dict[float, GridSearchRow] = {}

    def evaluate(i: int) -> GridSearchRow:
        L = grid[i]
        if L not in cache:
            s = estimate_arl(ChartParams(k, lam, L), 0.0, "direct", n_reps, cap, seed, workers)
            cache[L] = _row(lam, L, s, target, k)
        return cache[L]

    if exhaustive:
        candidates = list(range(len(grid)))
    else:
        # smallest index with ARL0 >= target
        lo, hi = 0, len(grid)
        while lo < hi:
            mid = (lo + hi) // 2
            if evaluate(mid).achieved_arl0 >= target:
                hi = mid
            else:
                lo = mid + 1
        candidates = [i for i in (lo - 1, lo) if 0 <= i < len(grid)]
    rows = [evaluate(i) for i in candidates]
    best = min(rows, key=lambda row: (abs(row.achieved_arl0 - target), row.limit))
    return best, dict(sorted(cache.items()))


def grid_search(target: float, lambda_grid=LAMBDA_GRID, limit_grid=LIMIT_GRID, k: int = 10,
                n_reps: int = 10_000, seed: int = 0, cap: int = ARL0_CAP, workers: int = 1,
                per_bucket: bool = True) -> list[GridSearchRow]:
    """Calibrated (lambda, L) rows for ``target``.

    With ``per_bucket`` only the row closest to target within each 0.1-wide
    lambda range is kept; otherwise one row per lambda is returned.
    """
    if not lambda_grid:
        raise ValueError("lambda grid is empty")
    best = [calibrate_limit(target, lam, limit_grid, k, n_reps, seed, cap, workers)[0]
            for lam in sorted(lambda_grid)]
    if not per_bucket:
        return best
    buckets: dict[float, GridSearchRow] = {}
    for row in best:
        b = lambda_bucket(row.lam)
        if b not in buckets or abs(row.achieved_arl0 - target) < abs(buckets[b].achieved_arl0 - target):
            buckets[b] = row
    return [buckets[b] for b in sorted(buckets)]


def arl1_profile(rows, deltas=DELTA_GRID, families=CONTINUOUS_FAMILIES, n_reps: int = 50_000,
                 seed: int = 0, k: int | None = None, cap: int = ARL1_CAP,
                 workers: int = 1) -> list[Arl1Cell]:
    """ARL1 for every (row, delta, family).

    Each family gets its own derived seed, so families are estimated
    independently. Families that cannot reach p1 = 1 by a finite shift are
    evaluated through the direct binomial path at that delta.
    ``rows`` may be GridSearchRows or plain ``(lam, limit)`` pairs.
    """
    cells = []
    for row in rows:
        if isinstance(row, GridSearchRow):
            lam, limit, kk = row.lam, row.limit, row.k
        else:
            lam, limit = row
            kk = 10
        kk = k if k is not None else kk
        params = ChartParams(kk, lam, limit)
        for family in families:
            if family not in FAMILIES:
                raise ValueError(f"unknown family {family!r}")
            fseed = derive_seed(seed, family)
            for delta in deltas:
                try:
                    spec = make_spec(family, delta)
                except ValueError:
                    if not math.isclose(delta, 0.5):
                        raise
                    spec = make_spec("direct", delta)
                s = estimate_arl(params, delta, family, n_reps, cap, fseed, workers, spec=spec)
                cells.append(Arl1Cell(lam, limit, delta, family, s.arl, s.se, kk, s.sd,
                                      s.n_reps, s.n_censored, s.cap, s.seed))
    return cells


def cv_across_distributions(cells, families=CONTINUOUS_FAMILIES) -> list[CvRow]:
    """Per-delta CV of ARL1 across families.

    SD uses the population convention (divide by the number of families).
    With several (lambda, L) rows the per-row means, SDs and CVs are averaged.
    """
    groups: dict[tuple, dict[str, float]] = defaultdict(dict)
    for c in cells:
        groups[(c.delta, c.lam, c.limit)][c.family] = c.arl1
    per_delta: dict[float, list[tuple[float, float, float]]] = defaultdict(list)
    for (delta, lam, limit), by_family in groups.items():
        missing = [f for f in families if f not in by_family]
        if missing:
            raise ValueError(f"delta={delta} lam={lam} L={limit}: missing families {missing}")
        vals = np.array([by_family[f] for f in families])
        mean = float(vals.mean())
        sd = float(vals.std(ddof=0))
        per_delta[delta].append((mean, sd, sd / mean))
    out = []
    for delta in sorted(per_delta):
        m, s, cv = np.mean(per_delta[delta], axis=0)
        out.append(CvRow(delta, float(m), float(s), float(cv)))
    return out
