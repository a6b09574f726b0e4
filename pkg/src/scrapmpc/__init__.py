"""Simulation toolkit for nominal, robust and dual scrap-selection control.

A steel-recycling plant melts a mix of scrap heaps with uncertain copper
content. The toolkit simulates the closed loop of belief-state estimation
(square-root Kalman filter) and receding-horizon scrap selection under a
chance constraint on the product's copper fraction, in four flavors:
nominal, robust (backoff only), implicit dual and explicit dual
(exploration-rewarding) formulations, plus a paired Monte Carlo harness
to compare them.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .belief import BeliefState, kalman_gain, measurement_update, propagate_joseph, propagate_sqrt
from .closed_loop import ClosedLoopTrace, RunOutcome, RunStreams, run_closed_loop, violation_share
from .config import Config, parse_config, write_config
from .experiments import CampaignSpec, MonteCarloSummary, quantile, run_campaign
from .ocp import (
    FormulationKind,
    Plan,
    ScrapSelectionProblem,
    build_dual,
    build_nominal,
    build_robust,
    evaluate,
)
from .plant import PlantState, SystemParams, default_params, measure, plant_step
from .solver import SolveResult, SolveStatus, SolverConfig, solve, solve_receding
from .stochastic import GaussianSpec, RngStream, inverse_normal_cdf, make_stream, sample_gaussian

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "BeliefState",
    "CampaignSpec",
    "ClosedLoopTrace",
    "Config",
    "FormulationKind",
    "GaussianSpec",
    "MonteCarloSummary",
    "Plan",
    "PlantState",
    "RngStream",
    "RunOutcome",
    "RunStreams",
    "ScrapSelectionProblem",
    "SolveResult",
    "SolveStatus",
    "SolverConfig",
    "SystemParams",
    "build_dual",
    "build_nominal",
    "build_robust",
    "default_params",
    "evaluate",
    "inverse_normal_cdf",
    "kalman_gain",
    "make_stream",
    "measure",
    "measurement_update",
    "parse_config",
    "plant_step",
    "propagate_joseph",
    "propagate_sqrt",
    "quantile",
    "run_campaign",
    "run_closed_loop",
    "sample_gaussian",
    "solve",
    "solve_receding",
    "violation_share",
    "write_config",
]
