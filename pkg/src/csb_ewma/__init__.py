"""Nonparametric EWMA chart for binary monitoring of multiple stream processes."""

from .chart import (ChartParams, ChartState, CSBEWMAChart, control_limits, dichotomize,
                    ewma_update, initial_state, period_count, standardize, step,
                    variance_exact_direct, variance_sequence, variance_step)
from .distributions import DistributionSpec, ShiftScenario, calibrate_shift, sample_period
from .optimizer import arl1_profile, cv_across_distributions, grid_search
from .simulation import RunLengthSummary, estimate_arl, run_length

__version__ = "0.1.0"
