"""
Services module.

Filter, simulation and evaluation logic: particle bookkeeping, dynamics,
measurement model, association, update, the T-MB baseline, the scenario
simulator, metrics and the Monte Carlo harness.
"""

from .association_service import build_weights, enumerate_marginals, spa_marginals
from .metrics_service import mospa_curve, ospa
from .simulation_service import generate_truth, render_image
from .tmb_service import tmb_step
from .tracking_service import run_experiment, ttombp_step
from .update_service import cap_phd, extract_estimates, mb_approximation, recycle

__all__ = [
    "build_weights",
    "spa_marginals",
    "enumerate_marginals",
    "mb_approximation",
    "recycle",
    "cap_phd",
    "extract_estimates",
    "tmb_step",
    "generate_truth",
    "render_image",
    "ospa",
    "mospa_curve",
    "ttombp_step",
    "run_experiment",
]
