"""Scikit-learn estimator wrapper around the construction engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, MultiOutputMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .builder import BuilderConfig, ValidationConfig, build
from .data import Dataset
from .model import predict as model_predict


class DeepSCNRegressor(MultiOutputMixin, RegressorMixin, BaseEstimator):
    """Incrementally built randomized network regressor.

    Hidden nodes are added one (or ``batch_size``) at a time; each candidate
    must pass a residual-correlation feasibility test before acceptance, and
    the linear readout over all hidden nodes of all layers is refit by
    minimum-norm least squares after every acceptance.  With
    ``max_layers=1`` this is the shallow variant; deeper settings feed each
    completed layer's hidden outputs to the next layer while keeping direct
    links from every layer to the output.

    Parameters mirror :class:`deepscn.builder.BuilderConfig`.  The estimator
    is deterministic in its parameters: refitting with the same data and
    ``random_state`` reproduces the identical model.

    Attributes set by :meth:`fit`: ``model_`` (the built network),
    ``trace_`` (per-node build records), ``n_features_in_``, ``n_nodes_``,
    ``layer_widths_``, ``stalled_``.
    """

    def __init__(self, max_layers=1, max_nodes_per_layer=50, epsilon=0.0,
                 t_max=30,
                 lambda_set=(0.5, 1.0, 3.0, 5.0, 10.0, 25.0, 50.0, 100.0,
                             150.0, 200.0, 250.0),
                 r_set=(0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999,
                        0.9999999),
                 constraint_mode="strict", batch_size=1, random_state=0,
                 validation_fraction=None, patience=5, parallel=False):
        self.max_layers = max_layers
        self.max_nodes_per_layer = max_nodes_per_layer
        self.epsilon = epsilon
        self.t_max = t_max
        self.lambda_set = lambda_set
        self.r_set = r_set
        self.constraint_mode = constraint_mode
        self.batch_size = batch_size
        self.random_state = random_state
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.parallel = parallel

    def _config(self) -> BuilderConfig:
        validation = None
        if self.validation_fraction is not None:
            validation = ValidationConfig(fraction=self.validation_fraction,
                                          patience=self.patience)
        config = BuilderConfig(
            max_layers=self.max_layers,
            max_nodes_per_layer=self.max_nodes_per_layer,
            epsilon=self.epsilon,
            t_max=self.t_max,
            lambda_set=tuple(self.lambda_set),
            r_set=tuple(self.r_set),
            constraint_mode=self.constraint_mode,
            batch_size=self.batch_size,
            seed=self.random_state,
            validation=validation,
        )
        config.validate()
        return config

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True,
                         dtype=np.float64)
        self._y_was_1d_ = y.ndim == 1
        targets = y.reshape(-1, 1) if self._y_was_1d_ else y
        result = build(Dataset(inputs=X, targets=targets), self._config(),
                       parallel=self.parallel)
        self.model_ = result.model
        self.trace_ = result.trace
        self.stalled_ = result.stalled
        self.n_features_in_ = X.shape[1]
        self.n_nodes_ = result.model.total_nodes
        self.layer_widths_ = result.model.layer_widths
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        out = model_predict(self.model_, X)
        return out.ravel() if self._y_was_1d_ else out
