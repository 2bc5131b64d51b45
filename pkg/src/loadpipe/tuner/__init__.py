"""Design-space search over schedule parameters."""

from .search import (
    Method,
    Neighbors,
    SearchConfig,
    Trial,
    TuningReport,
    refine_batch,
    reports_csv,
    sa_batch,
    sa_propose,
    tune,
)
from .space import (
    DEFAULT_CANDIDATES,
    PARAM_FIELDS,
    DesignSpace,
    EmptySpaceError,
    GroundTruth,
    analytical_costs,
    analytical_rank,
    default_space,
    enumerate_space,
)
from .surrogate import BoostedStumps, Stump, Surrogate, feature_matrix, features, pretrain_from_analytical, train_surrogate

__all__ = [
    "BoostedStumps", "DEFAULT_CANDIDATES", "DesignSpace", "EmptySpaceError", "GroundTruth", "Method",
    "Neighbors", "PARAM_FIELDS", "SearchConfig", "Stump", "Surrogate", "Trial", "TuningReport",
    "analytical_costs", "analytical_rank", "default_space", "enumerate_space", "feature_matrix", "features",
    "pretrain_from_analytical", "refine_batch", "reports_csv", "sa_batch", "sa_propose", "train_surrogate", "tune",
]
