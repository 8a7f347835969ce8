"""Conditional independence graphs of stationary Gaussian vector time series.

Blackman-Tukey spectral estimates feed a frequency-discretised multitask LASSO
per node; neighbourhoods are combined into an undirected graph.
"""
from .errors import DataError, InvalidParameterError, SolverError
from .gms import GmsConfig, Rule, combine_graph, estimate_neighborhood, infer_cig
from .graph import Graph
from .mlasso import SolverOptions, solve_mlasso_admm
from .procgen import ProcessModel, analytic_sdm, ground_truth_graph, simulate
from .spectral import TimeSeriesBlock, WindowSpec, bt_sdm, make_gaussian_window

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "InvalidParameterError",
    "SolverError",
    "GmsConfig",
    "Rule",
    "combine_graph",
    "estimate_neighborhood",
    "infer_cig",
    "Graph",
    "SolverOptions",
    "solve_mlasso_admm",
    "ProcessModel",
    "analytic_sdm",
    "ground_truth_graph",
    "simulate",
    "TimeSeriesBlock",
    "WindowSpec",
    "bt_sdm",
    "make_gaussian_window",
]
