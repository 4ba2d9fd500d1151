"""Nonparametric Bayesian multiple co-clustering with mixed feature types."""

from .core import (Assignments, Dataset, FeatureFamily, GaussianPrior, Kind, PoissonPrior,
                   TruncationConfig, standardize_gaussian, validate)
from .evaluation import adjusted_rand_index, contingency_table, match_views, view_membership_ari
from .inference import ClusteringResult, Mode, compute_elbo, fit, fit_single, mode
from .synthgen import Scenario, ViewSpec, generate, paper_scenario

__all__ = [
    "Assignments", "ClusteringResult", "Dataset", "FeatureFamily", "GaussianPrior", "Kind",
    "Mode", "PoissonPrior", "Scenario", "TruncationConfig", "ViewSpec", "adjusted_rand_index", "compute_elbo",
    "contingency_table", "fit", "fit_single", "generate", "match_views", "mode",
    "paper_scenario", "standardize_gaussian",
    "validate", "view_membership_ari",
]
