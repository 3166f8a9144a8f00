"""Incremental network construction under the supervisory feasibility test.

Candidate hidden nodes are drawn uniformly from ``[-lambda, lambda]`` and kept
only if their correlation with the current residual clears a data-dependent
threshold.  After every acceptance the readout over *all* hidden columns is
refit by minimum-norm least squares, which guarantees the residual norm never
increases and, for a node accepted at contraction parameter ``r``, decays
geometrically: ``||E_new||_F^2 <= r * ||E_old||_F^2``.

Every candidate trial draws from its own random stream keyed by
``(seed, layer, node, lambda_index, r_index, trial)``, so serial and parallel
candidate evaluation select identical nodes.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .data import Dataset, split
from .exceptions import ConfigError, DegenerateCandidateError
from .linalg import frobenius_norm, least_squares
from .model import (
    ActivationKind,
    DeepSCNModel,
    HiddenNode,
    Layer,
    activate,
    node_forward,
)

CONSTRAINT_MODES = ("strict", "relaxed")

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def derive_seed(seed: int, *tags) -> int:
    """Stable 63-bit sub-seed from a root seed and a tag path."""
    entropy = [seed & _SEED_MASK]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(int.from_bytes(tag.encode("utf-8"), "little"))
        else:
            entropy.append(int(tag) & _SEED_MASK)
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def trial_stream(seed: int, layer_index: int, node_index: int,
                 lambda_index: int, r_index: int, trial: int) -> np.random.Generator:
    """Independent generator for one candidate trial; keyed, not sequential."""
    entropy = (seed & _SEED_MASK, layer_index, node_index,
               lambda_index, r_index, trial)
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class ValidationConfig:
    """Held-out monitoring: stop after `patience` refits without improvement."""

    fraction: float
    patience: int


@dataclass(frozen=True)
class BuilderConfig:
    """All knobs of the construction loop.

    ``max_nodes_per_layer`` may be a single int (applied to every layer) or a
    sequence of length ``max_layers``.  ``lambda_set`` is the escalating scope
    schedule for the uniform weight/bias range; ``r_set`` the escalating
    contraction schedule, each value in (0, 1).
    """

    max_layers: int = 1
    max_nodes_per_layer: Union[int, Sequence[int]] = 50
    epsilon: float = 0.0
    t_max: int = 30
    lambda_set: Sequence[float] = (0.5, 1.0, 3.0, 5.0, 10.0, 25.0, 50.0,
                                   100.0, 150.0, 200.0, 250.0)
    r_set: Sequence[float] = (0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999,
                              0.9999999)
    constraint_mode: str = "strict"
    batch_size: int = 1
    seed: int = 0
    validation: Optional[ValidationConfig] = None

    def layer_caps(self) -> tuple[int, ...]:
        """Per-layer node caps, broadcasting a scalar to every layer."""
        if isinstance(self.max_nodes_per_layer, (int, np.integer)):
            return (int(self.max_nodes_per_layer),) * self.max_layers
        return tuple(int(v) for v in self.max_nodes_per_layer)

    def validate(self) -> None:
        if self.max_layers < 1:
            raise ConfigError("max_layers must be >= 1")
        caps = self.layer_caps()
        if len(caps) != self.max_layers:
            raise ConfigError(
                f"max_nodes_per_layer has {len(caps)} entries for "
                f"max_layers={self.max_layers}"
            )
        if any(c < 1 for c in caps):
            raise ConfigError("every layer cap must be >= 1")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ConfigError("epsilon must be a nonnegative real")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        lam = [float(v) for v in self.lambda_set]
        if not lam or any(v <= 0 or not np.isfinite(v) for v in lam):
            raise ConfigError("lambda_set must be non-empty positive reals")
        if sorted(lam) != lam:
            raise ConfigError("lambda_set must be ascending")
        rs = [float(v) for v in self.r_set]
        if not rs or any(not (0.0 < v < 1.0) for v in rs):
            raise ConfigError("r_set values must lie in (0, 1)")
        if sorted(rs) != rs:
            raise ConfigError("r_set must be ascending")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ConfigError(
                f"constraint_mode must be one of {CONSTRAINT_MODES}, "
                f"got {self.constraint_mode!r}"
            )
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("seed must be an integer")
        if self.validation is not None:
            if not (0.0 < self.validation.fraction < 1.0):
                raise ConfigError("validation fraction must lie in (0, 1)")
            if self.validation.patience < 1:
                raise ConfigError("validation patience must be >= 1")

    def to_dict(self) -> dict:
        doc = {
            "max_layers": self.max_layers,
            "max_nodes_per_layer": list(self.layer_caps()),
            "epsilon": float(self.epsilon),
            "t_max": self.t_max,
            "lambda_set": [float(v) for v in self.lambda_set],
            "r_set": [float(v) for v in self.r_set],
            "constraint_mode": self.constraint_mode,
            "batch_size": self.batch_size,
            "seed": int(self.seed),
        }
        if self.validation is not None:
            doc["validation"] = {
                "fraction": self.validation.fraction,
                "patience": self.validation.patience,
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BuilderConfig":
        """Strict-schema constructor: unknown keys are rejected."""
        if not isinstance(doc, dict):
            raise ConfigError("configuration document must be a JSON object")
        known = {
            "max_layers", "max_nodes_per_layer", "epsilon", "t_max",
            "lambda_set", "r_set", "constraint_mode", "batch_size", "seed",
            "validation",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in doc.items() if k != "validation"}
        if "max_nodes_per_layer" in kwargs and isinstance(
                kwargs["max_nodes_per_layer"], list):
            kwargs["max_nodes_per_layer"] = tuple(kwargs["max_nodes_per_layer"])
        for key in ("lambda_set", "r_set"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "validation" in doc and doc["validation"] is not None:
            val = doc["validation"]
            if not isinstance(val, dict) or set(val) != {"fraction", "patience"}:
                raise ConfigError(
                    "validation must be an object with keys {fraction, patience}"
                )
            kwargs["validation"] = ValidationConfig(
                fraction=float(val["fraction"]), patience=int(val["patience"])
            )
        try:
            config = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        config.validate()
        return config


def config_from_json(text: Union[str, bytes]) -> BuilderConfig:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid configuration JSON: {exc.msg} at line {exc.lineno} "
            f"column {exc.colno}"
        ) from exc
    return BuilderConfig.from_dict(doc)


@dataclass(frozen=True)
class CandidateScore:
    """Per-output feasibility scores of one candidate node."""

    theta_per_output: np.ndarray
    theta_sum: float
    feasible: bool


def sample_candidate(rng: np.random.Generator, lam: float,
                     d_in: int) -> HiddenNode:
    """Draw weights and bias independently uniform on ``[-lam, lam]``."""
    if lam <= 0:
        raise ConfigError(f"scope must be positive, got {lam}")
    if d_in < 1:
        raise ConfigError("input dimension must be >= 1")
    weights = rng.uniform(-lam, lam, size=d_in)
    bias = float(rng.uniform(-lam, lam))
    return HiddenNode(weights=weights, bias=bias)


def score_candidate(E: np.ndarray, h: np.ndarray, r: float,
                    mode: str = "strict") -> CandidateScore:
    """Feasibility score of hidden column ``h`` against residual ``E``.

    For each output q:
        theta_q = <E_q, h>^2 / <h, h> - (1 - r) * <E_q, E_q>

    Strict mode requires every theta_q >= 0; relaxed mode only their sum.
    A zero hidden column cannot be scored and raises
    :class:`DegenerateCandidateError` (discard the trial, not the build).
    """
    hh = float(h @ h)
    if hh <= 0.0:
        raise DegenerateCandidateError("candidate hidden vector has zero norm")
    proj = E.T @ h
    theta = proj * proj / hh - (1.0 - r) * np.sum(E * E, axis=0)
    theta_sum = float(np.sum(theta))
    if mode == "strict":
        feasible = bool(np.min(theta) >= 0.0)
    elif mode == "relaxed":
        feasible = theta_sum >= 0.0
    else:
        raise ConfigError(f"unknown constraint mode {mode!r}")
    return CandidateScore(theta_per_output=theta, theta_sum=theta_sum,
                          feasible=feasible)


@dataclass(frozen=True)
class CandidateChoice:
    """A feasible candidate selected from one configuration round."""

    node: HiddenNode
    hidden: np.ndarray
    score: CandidateScore
    lambda_value: float
    r_value: float
    trial_index: int


@dataclass(frozen=True)
class StallSignal:
    """Every (lambda, r) pair was exhausted without a feasible candidate."""

    layer_index: int
    node_index: int


@dataclass(frozen=True)
class NodeRecord:
    """Per-node trace entry appended at every readout refit."""

    layer_index: int
    node_index: int
    lambda_value: float
    r_value: float
    trial_index: int
    theta_sum: float
    residual_norm: float
    validation_rmse: Optional[float] = None

    def to_dict(self) -> dict:
        doc = {
            "layer_index": self.layer_index,
            "node_index": self.node_index,
            "lambda_value": self.lambda_value,
            "r_value": self.r_value,
            "trial_index": self.trial_index,
            "theta_sum": self.theta_sum,
            "residual_norm": self.residual_norm,
        }
        if self.validation_rmse is not None:
            doc["validation_rmse"] = self.validation_rmse
        return doc


@dataclass
class BuilderState:
    """Mutable construction state; owned by a single logical thread."""

    targets: np.ndarray
    residual: np.ndarray
    joint_hidden: np.ndarray
    readout: np.ndarray
    layers_so_far: list[Layer]
    current_nodes: list[HiddenNode]
    layer_inputs: np.ndarray
    activation: ActivationKind
    trace: list[NodeRecord] = field(default_factory=list)

    @property
    def total_nodes(self) -> int:
        return self.joint_hidden.shape[1]

    @property
    def current_layer_index(self) -> int:
        return len(self.layers_so_far)

    def residual_norm(self) -> float:
        return frobenius_norm(self.residual)


def init_state(X: np.ndarray, T: np.ndarray,
               activation: ActivationKind = ActivationKind.SIGMOID) -> BuilderState:
    """Fresh state: residual starts at the target matrix itself."""
    n, m = T.shape
    return BuilderState(
        targets=T,
        residual=T.copy(),
        joint_hidden=np.zeros((n, 0)),
        readout=np.zeros((0, m)),
        layers_so_far=[],
        current_nodes=[],
        layer_inputs=X,
        activation=activation,
    )


def select_best(pool: Sequence[CandidateChoice],
                budget: int) -> list[CandidateChoice]:
    """Top candidates by theta_sum; ties go to the lowest trial index."""
    ranked = sorted(pool, key=lambda c: (-c.score.theta_sum, c.trial_index))
    return ranked[:budget]


def _scan_pairs(state: BuilderState, config: BuilderConfig, layer_index: int,
                node_index: int, budget: int,
                executor: Optional[ThreadPoolExecutor]):
    """First (lambda, r) pair with a feasible pool wins; best-of-pool returned.

    Every trial draws its candidate from its own keyed stream; the forward
    pass over all of a pair's candidates is a single matrix product, and the
    scores do not depend on evaluation order, so threaded and serial scoring
    select identical nodes.  Returns up to ``budget`` choices or a
    StallSignal after exhausting every pair.
    """
    X = state.layer_inputs
    E = state.residual
    trials = range(config.t_max)
    for lam_index, lam in enumerate(config.lambda_set):
        for r_index, r in enumerate(config.r_set):
            nodes = [
                sample_candidate(
                    trial_stream(config.seed, layer_index, node_index,
                                 lam_index, r_index, t),
                    lam, X.shape[1])
                for t in trials
            ]
            weight_block = np.stack([n.weights for n in nodes], axis=1)
            bias_block = np.array([n.bias for n in nodes])
            hidden_block = activate(state.activation,
                                    X @ weight_block + bias_block)

            def score_one(t):
                h = hidden_block[:, t]
                try:
                    score = score_candidate(E, h, r, config.constraint_mode)
                except DegenerateCandidateError:
                    return None
                if not score.feasible:
                    return None
                return CandidateChoice(node=nodes[t], hidden=h, score=score,
                                       lambda_value=lam, r_value=r,
                                       trial_index=t)

            if executor is not None:
                results = list(executor.map(score_one, trials))
            else:
                results = [score_one(t) for t in trials]
            pool = [c for c in results if c is not None]
            if pool:
                return select_best(pool, budget)
    return StallSignal(layer_index=layer_index, node_index=node_index)


def configure_node(state: BuilderState, config: BuilderConfig,
                   layer_index: int, node_index: int, parallel: bool = False,
                   _executor: Optional[ThreadPoolExecutor] = None):
    """Search for one feasible node.  Returns a CandidateChoice or StallSignal."""
    if parallel and _executor is None:
        with _make_executor() as executor:
            out = _scan_pairs(state, config, layer_index, node_index, 1, executor)
    else:
        out = _scan_pairs(state, config, layer_index, node_index, 1, _executor)
    if isinstance(out, StallSignal):
        return out
    return out[0]


def _refit(state: BuilderState, new_columns: Sequence[np.ndarray] = ()) -> None:
    """Refit the readout over all columns, guarded against numerical regress.

    The global least-squares refit is optimal in exact arithmetic, but on a
    nearly singular joint matrix its computed residual can come out worse
    than the previous one.  The sequential rank-one update on the stored
    residual (the same update the geometric-decay argument uses) is cheap
    and unconditionally non-increasing, so whenever the evaluated refit
    residual is larger we keep the update instead.
    """
    beta = least_squares(state.joint_hidden, state.targets)
    residual = state.joint_hidden @ beta - state.targets
    if new_columns:
        fb_residual = state.residual.copy()
        fb_rows = np.zeros((len(new_columns), state.targets.shape[1]))
        for i, h in enumerate(new_columns):
            hh = float(h @ h)
            if hh > 0.0:
                coef = (fb_residual.T @ h) / hh
                fb_residual -= np.outer(h, coef)
                fb_rows[i] = coef
        if frobenius_norm(residual) > frobenius_norm(fb_residual):
            beta = np.vstack([state.readout, fb_rows])
            residual = fb_residual
    state.readout = beta
    state.residual = residual


def _append_columns(state: BuilderState, choices: list[CandidateChoice]) -> None:
    cols = [c.hidden[:, None] for c in choices]
    state.joint_hidden = np.concatenate([state.joint_hidden] + cols, axis=1)
    state.current_nodes.extend(c.node for c in choices)


def accept_node(state: BuilderState, node: HiddenNode, h: np.ndarray,
                lambda_value: float = float("nan"),
                r_value: float = float("nan"), trial_index: int = -1,
                theta_sum: float = float("nan")) -> BuilderState:
    """Append one hidden column, refit the readout, recompute the residual."""
    node_index = len(state.current_nodes)
    layer_index = state.current_layer_index
    state.joint_hidden = np.concatenate([state.joint_hidden, h[:, None]], axis=1)
    state.current_nodes.append(node)
    _refit(state, new_columns=(h,))
    state.trace.append(NodeRecord(
        layer_index=layer_index,
        node_index=node_index,
        lambda_value=lambda_value,
        r_value=r_value,
        trial_index=trial_index,
        theta_sum=theta_sum,
        residual_norm=state.residual_norm(),
    ))
    return state


def build_batch_round(state: BuilderState, config: BuilderConfig,
                      parallel: bool = False, max_nodes: Optional[int] = None,
                      _executor: Optional[ThreadPoolExecutor] = None):
    """One configuration round: accept up to ``batch_size`` nodes, refit once.

    Returns the list of NodeRecords appended, or a StallSignal.
    """
    budget = config.batch_size if max_nodes is None else min(
        config.batch_size, max_nodes)
    layer_index = state.current_layer_index
    node_index = len(state.current_nodes)
    if parallel and _executor is None:
        with _make_executor() as executor:
            out = _scan_pairs(state, config, layer_index, node_index, budget,
                              executor)
    else:
        out = _scan_pairs(state, config, layer_index, node_index, budget,
                          _executor)
    if isinstance(out, StallSignal):
        return out
    _append_columns(state, out)
    _refit(state, new_columns=[c.hidden for c in out])
    resid = state.residual_norm()
    records = []
    for offset, choice in enumerate(out):
        records.append(NodeRecord(
            layer_index=layer_index,
            node_index=node_index + offset,
            lambda_value=choice.lambda_value,
            r_value=choice.r_value,
            trial_index=choice.trial_index,
            theta_sum=choice.score.theta_sum,
            residual_norm=resid,
        ))
    state.trace.extend(records)
    return records


def _close_layer(state: BuilderState) -> Layer:
    if not state.current_nodes:
        raise ConfigError("cannot close a layer with no accepted nodes")
    layer = Layer(nodes=list(state.current_nodes), activation=state.activation,
                  input_dim=state.layer_inputs.shape[1])
    state.layers_so_far.append(layer)
    state.current_nodes = []
    return layer


def advance_layer(state: BuilderState) -> Layer:
    """Freeze the current layer and feed its hidden outputs to the next one.

    The residual is carried over untouched; the accepted hidden columns of
    the closing layer become the next layer's inputs verbatim.
    """
    width = len(state.current_nodes)
    layer = _close_layer(state)
    state.layer_inputs = state.joint_hidden[:, state.total_nodes - width:]
    return layer


@dataclass(frozen=True)
class BuildEvent:
    """Observer notification emitted by :func:`build`."""

    kind: str  # "accept" or "advance"
    layer_index: int
    state: BuilderState
    records: tuple[NodeRecord, ...] = ()
    nodes: tuple[HiddenNode, ...] = ()
    layer: Optional[Layer] = None


@dataclass
class BuildResult:
    """A finished build: the model plus its per-node trace."""

    model: DeepSCNModel
    trace: list[NodeRecord]
    stalled: bool

    @property
    def final_residual_norm(self) -> float:
        if not self.trace:
            return float("nan")
        return self.trace[-1].residual_norm


def _make_executor() -> ThreadPoolExecutor:
    workers = max(2, min(8, os.cpu_count() or 1))
    return ThreadPoolExecutor(max_workers=workers)


def build(dataset: Dataset, config: BuilderConfig, parallel: bool = False,
          observer: Optional[Callable[[BuildEvent], None]] = None) -> BuildResult:
    """Run the full construction loop on a dataset.

    Deterministic in (dataset, config): candidate streams are derived from the
    seed, and serial vs parallel evaluation selects identical nodes.  The
    observer, if given, is called after every refit ("accept") and at every
    layer transition ("advance"); it must not mutate the state it receives.
    """
    config.validate()
    train = dataset
    val = None
    if config.validation is not None:
        val, train = split(dataset, config.validation.fraction,
                           seed=derive_seed(config.seed, "validation-split"))
    X, T = train.inputs, train.targets

    state = init_state(X, T)
    caps = config.layer_caps()
    eps = config.epsilon
    stalled = False
    stop = False

    val_inputs = val.inputs if val is not None else None
    val_hidden = (np.zeros((val.inputs.shape[0], 0)) if val is not None else None)
    best_val = float("inf")
    patience_left = config.validation.patience if config.validation else 0

    executor = _make_executor() if parallel else None
    try:
        while (state.current_layer_index < config.max_layers
               and state.residual_norm() > eps and not stop):
            layer_index = state.current_layer_index
            cap = caps[layer_index]
            layer_stalled = False
            while (len(state.current_nodes) < cap
                   and state.residual_norm() > eps and not stop):
                room = cap - len(state.current_nodes)
                outcome = build_batch_round(state, config, max_nodes=room,
                                            _executor=executor)
                if isinstance(outcome, StallSignal):
                    layer_stalled = True
                    break
                records = outcome
                if val is not None:
                    new_cols = [
                        node_forward(val_inputs, rec_node, state.activation)[:, None]
                        for rec_node in state.current_nodes[-len(records):]
                    ]
                    val_hidden = np.concatenate([val_hidden] + new_cols, axis=1)
                    val_err = val_hidden @ state.readout - val.targets
                    val_rmse = float(np.sqrt(np.mean(val_err * val_err)))
                    tagged = [replace(r, validation_rmse=val_rmse) for r in records]
                    state.trace[-len(records):] = tagged
                    records = tagged
                    if val_rmse < best_val:
                        best_val = val_rmse
                        patience_left = config.validation.patience
                    else:
                        patience_left -= 1
                        if patience_left <= 0:
                            stop = True
                if observer is not None:
                    observer(BuildEvent(
                        kind="accept", layer_index=layer_index, state=state,
                        records=tuple(records),
                        nodes=tuple(state.current_nodes[-len(records):]),
                    ))
            if layer_stalled:
                stalled = True
                if not state.current_nodes:
                    break
            more_layers = (state.current_layer_index + 1 < config.max_layers
                           and state.residual_norm() > eps and not stop)
            if more_layers:
                width = len(state.current_nodes)
                layer = advance_layer(state)
                if val is not None:
                    val_inputs = val_hidden[:, val_hidden.shape[1] - width:]
                if observer is not None:
                    observer(BuildEvent(
                        kind="advance",
                        layer_index=state.current_layer_index - 1,
                        state=state, layer=layer,
                    ))
            else:
                if state.current_nodes:
                    _close_layer(state)
                break
    finally:
        if executor is not None:
            executor.shutdown()

    metadata = {
        "seed": int(config.seed),
        "config": config.to_dict(),
        "residual_trace": [rec.to_dict() for rec in state.trace],
        "stalled": stalled,
    }
    model = DeepSCNModel(
        layers=state.layers_so_far,
        readout=state.readout,
        input_dim=dataset.inputs.shape[1],
        output_dim=dataset.targets.shape[1],
        metadata=metadata,
    )
    return BuildResult(model=model, trace=state.trace, stalled=stalled)
