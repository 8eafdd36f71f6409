"""Synthetic populations, frame designs and the Monte Carlo harness."""

from .montecarlo import (EstimatorSpec, MonteCarloAbort, MonteCarloReport, default_estimators,
                         gain_in_efficiency, relative_bias, relative_mse, run_monte_carlo)
from .population import Population, ScenarioConfig, generate_population
from .report import render_csv, render_text
from .sampling import (DesignError, draw_midzuno, draw_sample, draw_stratified_srswor,
                       frame_designs, midzuno_inclusion)

__all__ = [
    "EstimatorSpec", "MonteCarloAbort", "MonteCarloReport", "default_estimators",
    "gain_in_efficiency", "relative_bias", "relative_mse", "run_monte_carlo",
    "Population", "ScenarioConfig", "generate_population", "render_csv", "render_text",
    "DesignError", "draw_midzuno", "draw_sample", "draw_stratified_srswor", "frame_designs",
    "midzuno_inclusion",
]
