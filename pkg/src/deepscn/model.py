"""Network representation and evaluation.

A built network is a stack of randomly configured layers plus a single
readout matrix over the hidden outputs of *all* layers (direct links from
every hidden layer to the output).  Layer ``k`` consumes the hidden output
of layer ``k - 1``; layer 1 consumes the raw input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .exceptions import (
    DimensionError,
    InvalidInputError,
    ModelFormatError,
    ModelVersionError,
)
from .linalg import as_matrix

FORMAT_VERSION = 1


class ActivationKind(str, Enum):
    SIGMOID = "sigmoid"


def activate(kind: ActivationKind, z):
    """Apply the activation to a scalar or array. Sigmoid saturates safely."""
    if kind == ActivationKind.SIGMOID:
        return expit(z)
    raise InvalidInputError(f"unsupported activation {kind!r}")


@dataclass(frozen=True, eq=False)
class HiddenNode:
    """One hidden unit: weight vector over its layer's inputs plus a bias."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise DimensionError("node weights must be a non-empty 1-D vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise InvalidInputError("node parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


@dataclass(eq=False)
class Layer:
    """Ordered hidden nodes sharing one activation and input dimension."""

    nodes: list[HiddenNode]
    activation: ActivationKind
    input_dim: int

    def __post_init__(self):
        for node in self.nodes:
            if node.weights.size != self.input_dim:
                raise DimensionError(
                    f"node has {node.weights.size} weights, layer input_dim is "
                    f"{self.input_dim}"
                )

    @property
    def width(self) -> int:
        return len(self.nodes)

    def weight_matrix(self) -> np.ndarray:
        """Stacked node weights, shape (input_dim, width)."""
        if not self.nodes:
            return np.zeros((self.input_dim, 0))
        return np.stack([n.weights for n in self.nodes], axis=1)

    def bias_vector(self) -> np.ndarray:
        return np.array([n.bias for n in self.nodes], dtype=np.float64)


def node_forward(X_prev: np.ndarray, node: HiddenNode,
                 activation: ActivationKind) -> np.ndarray:
    """Hidden output column of one node on a batch, shape (N,)."""
    if X_prev.shape[1] != node.weights.size:
        raise DimensionError(
            f"input has {X_prev.shape[1]} columns, node expects {node.weights.size}"
        )
    return activate(activation, X_prev @ node.weights + node.bias)


def layer_forward(X_prev, layer: Layer) -> np.ndarray:
    """Hidden output matrix of one layer, shape (N, width)."""
    X_prev = as_matrix(X_prev, "X_prev")
    if X_prev.shape[1] != layer.input_dim:
        raise DimensionError(
            f"input has {X_prev.shape[1]} columns, layer expects {layer.input_dim}"
        )
    Z = X_prev @ layer.weight_matrix() + layer.bias_vector()
    return activate(layer.activation, Z)


@dataclass(eq=False)
class DeepSCNModel:
    """A built network: layer stack, readout over all layers, metadata."""

    layers: list[Layer]
    readout: np.ndarray
    input_dim: int
    output_dim: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.readout = np.asarray(self.readout, dtype=np.float64)
        if self.readout.ndim != 2 or self.readout.shape[1] != self.output_dim:
            raise DimensionError(
                f"readout shape {self.readout.shape} does not match "
                f"output_dim {self.output_dim}"
            )
        if self.readout.shape[0] != self.total_nodes:
            raise DimensionError(
                f"readout has {self.readout.shape[0]} rows for "
                f"{self.total_nodes} hidden nodes"
            )

    @property
    def total_nodes(self) -> int:
        return sum(layer.width for layer in self.layers)

    @property
    def layer_widths(self) -> list[int]:
        return [layer.width for layer in self.layers]


def full_hidden_matrix(model: DeepSCNModel, X) -> np.ndarray:
    """Hidden outputs of every layer, concatenated columnwise in layer order."""
    X = as_matrix(X, "X")
    if X.shape[1] != model.input_dim:
        raise DimensionError(
            f"X has {X.shape[1]} features, model expects {model.input_dim}"
        )
    blocks = []
    current = X
    for layer in model.layers:
        current = layer_forward(current, layer)
        blocks.append(current)
    if not blocks:
        return np.zeros((X.shape[0], 0))
    return np.concatenate(blocks, axis=1)


def predict(model: DeepSCNModel, X) -> np.ndarray:
    """Model output: full hidden matrix times the readout.

    An empty model (no layers) has a (N, 0) hidden matrix and a (0, m)
    readout, so the product is the zero matrix.
    """
    return full_hidden_matrix(model, X) @ model.readout


def _model_document(model: DeepSCNModel) -> dict:
    activations = {layer.activation.value for layer in model.layers}
    if len(activations) > 1:
        raise ModelFormatError("format v1 requires a single activation kind")
    activation = activations.pop() if activations else ActivationKind.SIGMOID.value
    return {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "activation": activation,
        "layers": [
            [{"weights": node.weights.tolist(), "bias": node.bias}
             for node in layer.nodes]
            for layer in model.layers
        ],
        "readout": model.readout.tolist(),
        "metadata": model.metadata,
    }


def serialize(model: DeepSCNModel) -> bytes:
    """Canonical JSON encoding; numbers keep full round-trip precision."""
    doc = _model_document(model)
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


_DOC_KEYS = {
    "format_version", "input_dim", "output_dim", "activation", "layers",
    "readout", "metadata",
}


def deserialize(data: bytes | str) -> DeepSCNModel:
    """Inverse of :func:`serialize`; raises on malformed or versioned docs."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"invalid model document: {exc.msg} at line {exc.lineno} "
            f"column {exc.colno}"
        ) from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    unknown = set(doc) - _DOC_KEYS
    if unknown:
        raise ModelFormatError(f"unknown keys in model document: {sorted(unknown)}")
    missing = _DOC_KEYS - set(doc)
    if missing:
        raise ModelFormatError(f"missing keys in model document: {sorted(missing)}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported format_version {doc['format_version']!r}, "
            f"expected {FORMAT_VERSION}"
        )
    try:
        activation = ActivationKind(doc["activation"])
    except ValueError as exc:
        raise ModelFormatError(f"unknown activation {doc['activation']!r}") from exc

    input_dim = doc["input_dim"]
    output_dim = doc["output_dim"]
    if not (isinstance(input_dim, int) and input_dim >= 1):
        raise ModelFormatError(f"bad input_dim {input_dim!r}")
    if not (isinstance(output_dim, int) and output_dim >= 1):
        raise ModelFormatError(f"bad output_dim {output_dim!r}")

    layers = []
    prev_dim = input_dim
    try:
        for spec in doc["layers"]:
            nodes = [HiddenNode(np.asarray(n["weights"], dtype=np.float64),
                                float(n["bias"])) for n in spec]
            layers.append(Layer(nodes, activation, input_dim=prev_dim))
            prev_dim = len(nodes)
        readout = np.asarray(doc["readout"], dtype=np.float64)
        if readout.size == 0:
            readout = readout.reshape(0, output_dim)
        model = DeepSCNModel(
            layers=layers,
            readout=readout,
            input_dim=input_dim,
            output_dim=output_dim,
            metadata=doc["metadata"],
        )
    except (DimensionError, InvalidInputError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"inconsistent model document: {exc}") from exc
    return model
