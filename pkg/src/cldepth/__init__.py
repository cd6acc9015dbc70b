"""Concurrent-learning depth observers for a single feature point seen by a moving camera."""

from .excitation import AuxiliaryStack, HistoryStack, StackEntry, make_entry, pe_integral, push_measurement
from .metrics import MetricsReport, convergence_time, mape, rmse
from .observers import (
    FullOrderGains,
    FullOrderObserver,
    ReducedOrderObserver,
    check_gain_condition_full,
    check_gain_condition_reduced,
    estimate_lipschitz_g,
    ls_baseline,
)
from .pds import EuclideanPoint, FeatureState, NoiseSpec, Series, simulate_truth
from .scenarios import (
    MonteCarloSpec,
    ScenarioConfig,
    replay_log,
    run_monte_carlo,
    run_scenario,
    scenario_sim1,
    scenario_sim2,
)

__version__ = "0.1.0"
