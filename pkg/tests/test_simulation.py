import numpy as np
import pytest

from csb_ewma.chart import ChartParams, CSBEWMAChart
from csb_ewma.distributions import calibrate_shift
from csb_ewma.simulation import (RunLengthSummary, derive_seed, estimate_arl, make_spec,
                                 replication_rng, run_length, simulate_run_lengths)


class RecordingRng:
    """Generator proxy that keeps every binomial draw."""

    def __init__(self, rng):
        self.rng = rng
        self.draws = []

    def binomial(self, n, p, size):
        x = self.rng.binomial(n, p, size=size)
        self.draws.append(x)
        return x


def replay_run_length(params, counts, cap):
    chart = CSBEWMAChart(params)
    for t, c in enumerate(counts[:cap], 1):
        if chart.update_count(int(c)).signaled:
            return t
    return cap


@pytest.mark.parametrize(("lam", "L", "k", "delta"), [
    (0.2, 1.4, 10, 0.0), (0.15, 1.525, 3, 0.0), (0.6, 1.6, 7, 0.1), (1.0, 1.9, 2, 0.0),
])
def test_engine_matches_scalar_chart(lam, L, k, delta):
    params = ChartParams(k, lam, L)
    spec = make_spec("direct", delta)
    for rep in range(40):
        rec = RecordingRng(replication_rng(9, rep))
        rl = run_length(params, spec, rec, cap=3000)
        counts = np.concatenate(rec.draws)
        assert rl == replay_run_length(params, counts, 3000)


def test_tiny_limit_signals_immediately_for_odd_k():
    params = ChartParams(5, 0.3, 1e-12)
    spec = make_spec("direct", 0.0)
    for rep in range(50):
        assert run_length(params, spec, replication_rng(1, rep), cap=10) == 1


def test_certain_exceedance_signals_at_one():
    params = ChartParams(4, 0.2, 1.4)
    rl = simulate_run_lengths(params, make_spec("direct", 0.5), 200, 100, seed=3)
    assert np.all(rl == 1)


def test_cap_censoring():
    params = ChartParams(10, 0.2, 2.5)
    s = estimate_arl(params, n_reps=300, cap=20, seed=2)
    assert s.cap == 20 and s.n_censored > 0
    assert 1 <= s.arl <= 20


def test_cap_must_be_positive():
    with pytest.raises(ValueError):
        run_length(ChartParams(3, 0.2, 1.4), make_spec("direct", 0.0), replication_rng(0, 0), cap=0)


def test_default_caps():
    p = ChartParams(10, 0.2, 1.4)
    assert estimate_arl(p, 0.3, n_reps=10).cap == 50_000
    assert estimate_arl(p, 0.0, n_reps=10, cap=None).cap == 250_000


def test_summary_fields():
    rl = np.array([1, 3, 5, 7])
    s = RunLengthSummary.from_run_lengths(rl, cap=7, seed=4)
    assert s.arl == 4.0
    assert s.sd == pytest.approx(np.std(rl, ddof=1))
    assert s.se == pytest.approx(s.sd / 2)
    assert (s.n_reps, s.n_censored, s.seed) == (4, 1, 4)


def test_determinism_across_workers():
    p = ChartParams(10, 0.2, 1.4)
    a = estimate_arl(p, 0.05, "normal", n_reps=2500, seed=17, workers=1)
    b = estimate_arl(p, 0.05, "normal", n_reps=2500, seed=17, workers=3)
    assert a == b
    assert estimate_arl(p, 0.05, "normal", n_reps=2500, seed=18) != a


def test_prefix_of_replications_is_stable():
    p = ChartParams(5, 0.3, 1.5)
    spec = make_spec("direct", 0.1)
    long = simulate_run_lengths(p, spec, 2100, 5000, seed=8)
    short = simulate_run_lengths(p, spec, 700, 5000, seed=8)
    np.testing.assert_array_equal(long[:700], short)


def test_common_random_numbers_identical_across_families():
    p = ChartParams(6, 0.2, 1.4)
    runs = [simulate_run_lengths(p, calibrate_shift(f, 0.15), 500, 5000, seed=21)
            for f in ("normal", "laplace", "uniform", "exponential")]
    for r in runs[1:]:
        np.testing.assert_array_equal(r, runs[0])


def test_arl0_nondecreasing_in_limit():
    arls = [estimate_arl(ChartParams(10, 0.2, L), n_reps=500, cap=20_000, seed=5)
            for L in (1.2, 1.4, 1.6)]
    assert arls[0].arl <= arls[1].arl <= arls[2].arl


def test_arl1_nonincreasing_in_shift():
    p = ChartParams(10, 0.2, 1.4)
    arls = [estimate_arl(p, d, n_reps=2000, seed=6) for d in (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)]
    for a, b in zip(arls, arls[1:]):
        assert b.arl <= a.arl + 3 * np.hypot(a.se, b.se)


def test_derive_seed_distinguishes_tags():
    seeds = {derive_seed(1, f) for f in ("normal", "laplace", "uniform", "exponential")}
    assert len(seeds) == 4
    assert derive_seed(1, "normal") == derive_seed(1, "normal")


def test_continuous_spec_requires_half_p0():
    with pytest.raises(ValueError):
        make_spec("normal", 0.1, p0=0.3)
    assert make_spec("direct", 0.1, p0=0.3).p1 == pytest.approx(0.4)
