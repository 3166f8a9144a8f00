"""Evaluation metrics and diagnostics for built models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError, InvalidInputError
from .linalg import as_matrix, numerical_rank


def rmse(pred, actual) -> float:
    """Root mean squared error pooled over samples and outputs."""
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise InvalidInputError("need at least one sample")
    diff = p - a
    return float(np.sqrt(np.mean(diff * diff)))


def ppa(pred, actual, threshold: float = 10.0) -> float:
    """Percentage of predictions with absolute error strictly below threshold.

    Errors exactly equal to the threshold do not count.
    """
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise InvalidInputError("need at least one sample")
    if not threshold > 0:
        raise InvalidInputError(f"threshold must be positive, got {threshold}")
    return 100.0 * float(np.count_nonzero(np.abs(p - a) < threshold)) / p.size


def rank_deficiency_ratio(H, node_count: Optional[int] = None,
                          tol="auto") -> float:
    """Numerical rank of the joint hidden matrix over its column count.

    1.0 means every hidden node contributes an independent basis direction.
    """
    H = as_matrix(H, "H")
    k = H.shape[1] if node_count is None else int(node_count)
    if k < 1:
        raise InvalidInputError("node count must be >= 1")
    if H.shape[1] != k:
        raise DimensionError(f"H has {H.shape[1]} columns, node_count is {k}")
    return numerical_rank(H, tol) / k


def consistency_gap(trace) -> float:
    """Largest test-over-train RMSE excess along a (train, test) trace."""
    pairs = list(trace)
    if not pairs:
        raise InvalidInputError("trace must contain at least one entry")
    return max(float(test) - float(train) for train, test in pairs)


@dataclass
class EvalReport:
    """Summary of one train/test evaluation, plus optional per-node traces."""

    rmse_train: float
    rmse_test: float
    ppa_train: Optional[float] = None
    ppa_test: Optional[float] = None
    residual_trace: list[tuple[int, float, float]] = field(default_factory=list)
    rank_ratio_trace: list[tuple[int, float]] = field(default_factory=list)

    def consistency_gap(self) -> float:
        return consistency_gap(
            [(train, test) for _, train, test in self.residual_trace]
        )

    def to_dict(self) -> dict:
        doc = {"rmse_train": self.rmse_train, "rmse_test": self.rmse_test}
        if self.ppa_train is not None:
            doc["ppa_train"] = self.ppa_train
        if self.ppa_test is not None:
            doc["ppa_test"] = self.ppa_test
        if self.residual_trace:
            doc["residual_trace"] = [list(t) for t in self.residual_trace]
        if self.rank_ratio_trace:
            doc["rank_ratio_trace"] = [list(t) for t in self.rank_ratio_trace]
        return doc
