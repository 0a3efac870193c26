"""Lyapunov-type stability checks and almost-periodicity scans for SDEs."""

from .errors import ApsdeError, IntegrationOverflowError, InvalidInputError, NumericError
from .lyapunov import (
    ConditionReport,
    LyapunovFunction,
    RateFunction,
    l2_bound_certificate,
    lv_pair,
    lv_shifted,
    lv_single,
    v_epsilon,
    verify_dissipativity,
    verify_positivity,
    verify_quadratic_bounds,
)
from .measure import EmpiricalLaw, LawTrajectory, MetricConfig, convergence_check, law_trajectory, rho_distance, sup_distance
from .model import Box, CoefficientField, LipschitzReport, QuasiPeriodicSignal, SdeModel, estimate_lipschitz, shift_model
from .simulate import (
    GaussianLaw,
    MomentTrajectory,
    PathEnsemble,
    PointMass,
    TimeGrid,
    second_moment_trajectory,
    simulate_coupled,
    simulate_ensemble,
    supermartingale_probe,
    tail_bound_check,
)
from .almostperiod import AlmostPeriodReport, ApScanConfig, aap_check, scan_function_ap, scan_law_ap

__version__ = "0.1.0"
