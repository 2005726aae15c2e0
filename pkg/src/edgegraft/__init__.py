"""Structure learning for discrete pairwise Markov random fields by edge grafting."""

from .data import DiscreteDataset, SufficientStatsStore, load_csv, split
from .estimator import EdgeGraftingMRF
from .inference import InferenceEngine, exact_marginals, loopy_bp, nlpl
from .learners import LearnerConfig, RunTrace, best_choice_edge_grafting, edge_grafting, first_hit, learn
from .model import MrfModel, VariableSpec, parameter_count
from .synthetic import generate_ground_truth, gibbs_sample, recall

__version__ = "0.1.0"

__all__ = [
    "DiscreteDataset",
    "EdgeGraftingMRF",
    "InferenceEngine",
    "LearnerConfig",
    "MrfModel",
    "RunTrace",
    "SufficientStatsStore",
    "VariableSpec",
    "best_choice_edge_grafting",
    "edge_grafting",
    "exact_marginals",
    "first_hit",
    "generate_ground_truth",
    "gibbs_sample",
    "learn",
    "load_csv",
    "loopy_bp",
    "nlpl",
    "parameter_count",
    "recall",
    "split",
]
