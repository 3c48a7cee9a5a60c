"""Exact simulation of quantum query algorithms for the mean of p-summable sequences."""

from .config import BudgetExceeded, Settings, get_settings, set_settings
from .counting import amplitude_estimation, count_estimate, level_estimator, median_boost, truncated_mean_algorithm
from .hard import HardFamily, choose_hard_params, condition_I_check, lower_bound_value, make_f_u, rho
from .mean import MeanConfig, choose_k, mean_algorithm, median_compose
from .query import Estimate, MeasuredAlgorithm, QueryDescriptor, Resources, UnmeasuredAlgorithm
from .sequences import (
    SequenceInstance,
    in_ball,
    level_mean,
    lp_norm,
    mean,
    random_ball_instance,
    tail_mean,
    truncated_mean,
)
from .simcore import OutcomeDistribution, RegisterLayout, StateVector
from .tail import TailParams, choose_M, choose_tail_params, run_A0, tail_algorithm

__version__ = "0.1.0"
