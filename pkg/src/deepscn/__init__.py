"""Deep stochastic configuration networks.

Incremental construction of randomized networks whose hidden parameters are
accepted only under a residual-correlation feasibility test, with a
minimum-norm least-squares readout over the hidden outputs of every layer.
"""

from .builder import (
    BuilderConfig,
    BuildResult,
    NodeRecord,
    StallSignal,
    ValidationConfig,
    build,
    config_from_json,
)
from .data import Dataset, gen_benchmark, gen_rotated_glyphs, load_csv, save_csv, split
from .estimator import DeepSCNRegressor
from .exceptions import (
    ConfigError,
    DeepSCNError,
    DimensionError,
    InvalidInputError,
    ModelFormatError,
    ModelVersionError,
)
from .metrics import EvalReport, consistency_gap, ppa, rank_deficiency_ratio, rmse
from .model import (
    ActivationKind,
    DeepSCNModel,
    HiddenNode,
    Layer,
    deserialize,
    full_hidden_matrix,
    predict,
    serialize,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "BuildResult",
    "BuilderConfig",
    "ConfigError",
    "Dataset",
    "DeepSCNError",
    "DeepSCNModel",
    "DeepSCNRegressor",
    "DimensionError",
    "EvalReport",
    "HiddenNode",
    "InvalidInputError",
    "Layer",
    "ModelFormatError",
    "ModelVersionError",
    "NodeRecord",
    "StallSignal",
    "ValidationConfig",
    "build",
    "config_from_json",
    "consistency_gap",
    "deserialize",
    "full_hidden_matrix",
    "gen_benchmark",
    "gen_rotated_glyphs",
    "load_csv",
    "ppa",
    "predict",
    "rank_deficiency_ratio",
    "rmse",
    "save_csv",
    "serialize",
    "split",
]
