"""Experiment protocols: effectiveness, rank deficiency, robustness, glyphs.

Each protocol runs a set of seeded trials on synthetic data and writes
plot-ready CSV files.  All randomness (data sampling, builder seeds, r-set
draws) derives from the seeds in the experiment spec, so reruns are
byte-identical.

Curve file schemas (documented in the README):
    fig2 / fig4:  node_count,train_rmse,test_rmse
    fig3:         node_count,p
    casestudy:    see the table/residual/grid writers below
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .builder import BuilderConfig, build, derive_seed
from .data import Dataset, gen_benchmark, gen_rotated_glyphs_labeled, rotate_image
from .exceptions import ConfigError
from .linalg import numerical_rank
from .metrics import ppa, rmse
from .model import DeepSCNModel, layer_forward, node_forward, predict

EXPERIMENT_NAMES = ("fig2", "fig3", "fig4", "casestudy")

# Escalating contraction schedule 1 - 10^-k, k = 1..7.
R_GEOMETRIC = tuple(1.0 - 10.0 ** (-k) for k in range(1, 8))

BENCH_LAMBDAS = (0.5, 1.0, 3.0, 5.0, 10.0, 25.0, 50.0, 100.0, 150.0, 200.0,
                 250.0)
GLYPH_LAMBDAS = (0.05, 0.1, 0.5, 1.0, 5.0, 25.0, 100.0)

_DEFAULT_PARAMS = {
    "fig2": {
        "n_train": 1000, "n_test": 1000, "t_max": 30,
        "scn_nodes": 200, "dscn_layers": 4, "dscn_nodes_per_layer": 50,
        "lambda_set": BENCH_LAMBDAS, "r_set": R_GEOMETRIC, "epsilon": 0.0,
    },
    "fig3": {
        "n_train": 1000, "t_max": 30,
        "scn_nodes": 100, "dscn_layers": 4, "dscn_nodes_per_layer": 25,
        "lambda_set": BENCH_LAMBDAS, "r_set": R_GEOMETRIC, "epsilon": 0.0,
    },
    "fig4": {
        "n_train": 1000, "n_test": 1000, "t_max": 30, "draws": 3,
        "scn_nodes": 100, "dscn_layers": 4, "dscn_nodes_per_layer": 25,
        "lambda_set": BENCH_LAMBDAS, "epsilon": 0.0,
    },
    "casestudy": {
        "n_train": 2000, "n_test": 2000, "t_max": 20, "batch_size": 25,
        "scn_nodes": 1000, "dscn_layers": 4, "dscn_nodes_per_layer": 250,
        "lambda_set": GLYPH_LAMBDAS, "r_set": R_GEOMETRIC, "epsilon": 0.0,
        "ppa_threshold": 10.0, "grid_samples": 16,
    },
}


@dataclass
class ExperimentSpec:
    """Which protocol to run, its trial seeds, and parameter overrides."""

    name: str
    seeds: list[int]
    params: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return len(self.seeds)

    def resolved_params(self) -> dict:
        merged = dict(_DEFAULT_PARAMS[self.name])
        merged.update(self.params)
        return merged

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise ConfigError("experiment spec must be a JSON object")
        unknown = set(doc) - {"name", "seeds", "trials", "params"}
        if unknown:
            raise ConfigError(f"unknown experiment spec keys: {sorted(unknown)}")
        name = doc.get("name")
        if name not in EXPERIMENT_NAMES:
            raise ConfigError(
                f"unknown experiment name {name!r}; expected one of "
                f"{EXPERIMENT_NAMES}"
            )
        seeds = doc.get("seeds")
        if not isinstance(seeds, list) or not seeds or not all(
                isinstance(s, int) for s in seeds):
            raise ConfigError("experiment spec needs a non-empty integer seed list")
        if "trials" in doc and doc["trials"] != len(seeds):
            raise ConfigError(
                f"trials={doc['trials']} does not match {len(seeds)} seeds"
            )
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        known = set(_DEFAULT_PARAMS[name])
        bad = set(params) - known
        if bad:
            raise ConfigError(f"unknown params for {name}: {sorted(bad)}")
        return cls(name=name, seeds=list(seeds), params=params)


def spec_from_json(text: str | bytes) -> ExperimentSpec:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid experiment spec JSON: {exc.msg} at line {exc.lineno} "
            f"column {exc.colno}"
        ) from exc
    return ExperimentSpec.from_dict(doc)


class EvalTracker:
    """Mirrors the build cascade on a held-out set via build events.

    Maintains the test-set joint hidden matrix incrementally so per-node
    test RMSE costs one column forward plus one readout product per
    acceptance.
    """

    def __init__(self, test: Dataset):
        self.test = test
        self._inputs = test.inputs
        self._hidden = np.zeros((test.inputs.shape[0], 0))
        self.curve: list[tuple[int, float]] = []  # (node_count, test_rmse)

    def __call__(self, event) -> None:
        if event.kind == "advance":
            width = event.layer.width
            self._inputs = self._hidden[:, self._hidden.shape[1] - width:]
            return
        cols = [node_forward(self._inputs, node, event.state.activation)[:, None]
                for node in event.nodes]
        self._hidden = np.concatenate([self._hidden] + cols, axis=1)
        pred = self._hidden @ event.state.readout
        self.curve.append(
            (self._hidden.shape[1], rmse(pred, self.test.targets))
        )


class RankTracker:
    """Records the rank-deficiency ratio of the joint hidden matrix per node."""

    def __init__(self):
        self.curve: list[tuple[int, float]] = []  # (node_count, p)

    def __call__(self, event) -> None:
        if event.kind != "accept":
            return
        H = event.state.joint_hidden
        k = H.shape[1]
        self.curve.append((k, numerical_rank(H) / k))


def _fanout(observers):
    def notify(event):
        for obs in observers:
            obs(event)
    return notify


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                repr(v) if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def _train_curve(trace, n, m) -> dict[int, float]:
    """Per-node train RMSE from the recorded residual norms."""
    scale = math.sqrt(n * m)
    curve = {}
    count = 0
    for rec in trace:
        count += 1
        curve[count] = rec.residual_norm / scale
    return curve


def _architectures(p) -> list[tuple[str, int, object]]:
    return [
        ("scn", 1, p["scn_nodes"]),
        ("dscn", p["dscn_layers"], p["dscn_nodes_per_layer"]),
    ]


def run_fig2(spec: ExperimentSpec, out_dir: Path) -> list[Path]:
    """Per-node train/test RMSE for the shallow and deep settings."""
    p = spec.resolved_params()
    written = []
    summary_rows = []
    for k, seed in enumerate(spec.seeds):
        train = gen_benchmark(p["n_train"], seed=derive_seed(seed, "train"))
        test = gen_benchmark(p["n_test"], seed=derive_seed(seed, "test"))
        for label, layers, width in _architectures(p):
            config = BuilderConfig(
                max_layers=layers, max_nodes_per_layer=width,
                epsilon=p["epsilon"], t_max=p["t_max"],
                lambda_set=tuple(p["lambda_set"]), r_set=tuple(p["r_set"]),
                seed=derive_seed(seed, "build", label),
            )
            tracker = EvalTracker(test)
            result = build(train, config, observer=tracker)
            train_curve = _train_curve(result.trace, train.n_samples,
                                       train.n_outputs)
            test_curve = dict(tracker.curve)
            rows = [(i, train_curve[i], test_curve[i])
                    for i in sorted(train_curve)]
            path = out_dir / f"fig2_{label}_trial{k}.csv"
            _write_csv(path, "node_count,train_rmse,test_rmse", rows)
            written.append(path)
            summary_rows.append((
                k, seed, label, result.model.total_nodes,
                rows[-1][1], rows[-1][2], int(result.stalled),
            ))
    path = out_dir / "fig2_summary.csv"
    _write_csv(path,
               "trial,seed,model,nodes,final_train_rmse,final_test_rmse,stalled",
               summary_rows)
    written.append(path)
    return written


def run_fig3(spec: ExperimentSpec, out_dir: Path) -> list[Path]:
    """Rank-deficiency ratio per node for both architectures."""
    p = spec.resolved_params()
    written = []
    summary_rows = []
    for k, seed in enumerate(spec.seeds):
        train = gen_benchmark(p["n_train"], seed=derive_seed(seed, "train"))
        for label, layers, width in _architectures(p):
            config = BuilderConfig(
                max_layers=layers, max_nodes_per_layer=width,
                epsilon=p["epsilon"], t_max=p["t_max"],
                lambda_set=tuple(p["lambda_set"]), r_set=tuple(p["r_set"]),
                seed=derive_seed(seed, "build", label),
            )
            tracker = RankTracker()
            result = build(train, config, observer=tracker)
            path = out_dir / f"fig3_{label}_trial{k}.csv"
            _write_csv(path, "node_count,p", tracker.curve)
            written.append(path)
            summary_rows.append((
                k, seed, label, result.model.total_nodes,
                tracker.curve[-1][1] if tracker.curve else 0.0,
            ))
    path = out_dir / "fig3_summary.csv"
    _write_csv(path, "trial,seed,model,nodes,final_p", summary_rows)
    written.append(path)
    return written


def draw_r_set(seed: int, count: int = 10) -> tuple[float, ...]:
    """``count`` values from (0.9, 0.99) in increasing order, plus 1 - 1e-6."""
    rng = np.random.default_rng(seed)
    values = np.sort(rng.uniform(0.9, 0.99, size=count))
    return tuple(values) + (1.0 - 1e-6,)


def run_fig4(spec: ExperimentSpec, out_dir: Path) -> list[Path]:
    """Training curves under independently drawn contraction schedules."""
    p = spec.resolved_params()
    written = []
    summary_rows = []
    for k, seed in enumerate(spec.seeds):
        train = gen_benchmark(p["n_train"], seed=derive_seed(seed, "train"))
        test = gen_benchmark(p["n_test"], seed=derive_seed(seed, "test"))
        for j in range(p["draws"]):
            r_set = draw_r_set(derive_seed(seed, "rdraw", j))
            for label, layers, width in _architectures(p):
                config = BuilderConfig(
                    max_layers=layers, max_nodes_per_layer=width,
                    epsilon=p["epsilon"], t_max=p["t_max"],
                    lambda_set=tuple(p["lambda_set"]), r_set=r_set,
                    seed=derive_seed(seed, "build", label, j),
                )
                tracker = EvalTracker(test)
                result = build(train, config, observer=tracker)
                train_curve = _train_curve(result.trace, train.n_samples,
                                           train.n_outputs)
                test_curve = dict(tracker.curve)
                rows = [(i, train_curve[i], test_curve[i])
                        for i in sorted(train_curve)]
                path = out_dir / f"fig4_{label}_draw{j}_trial{k}.csv"
                _write_csv(path, "node_count,train_rmse,test_rmse", rows)
                written.append(path)
                summary_rows.append((
                    k, seed, j, label, result.model.total_nodes,
                    rows[-1][1], rows[-1][2],
                ))
    path = out_dir / "fig4_summary.csv"
    _write_csv(path,
               "trial,seed,draw,model,nodes,final_train_rmse,final_test_rmse",
               summary_rows)
    written.append(path)
    return written


def _five_number(values: np.ndarray) -> tuple[float, float, float, float, float]:
    qs = np.percentile(values, [0, 25, 50, 75, 100])
    return tuple(float(q) for q in qs)


def run_casestudy(spec: ExperimentSpec, out_dir: Path) -> list[Path]:
    """Rotation-angle regression on glyphs: metrics table, residual summaries,
    and rotation-corrected image grids."""
    p = spec.resolved_params()
    written = []
    table_rows = []
    threshold = p["ppa_threshold"]
    for k, seed in enumerate(spec.seeds):
        train, _ = gen_rotated_glyphs_labeled(p["n_train"],
                                              seed=derive_seed(seed, "train"))
        test, test_ids = gen_rotated_glyphs_labeled(
            p["n_test"], seed=derive_seed(seed, "test"))
        predictions = {}
        for label, layers, width in _architectures(p):
            config = BuilderConfig(
                max_layers=layers, max_nodes_per_layer=width,
                epsilon=p["epsilon"], t_max=p["t_max"],
                batch_size=p["batch_size"],
                lambda_set=tuple(p["lambda_set"]), r_set=tuple(p["r_set"]),
                seed=derive_seed(seed, "build", label),
            )
            result = build(train, config)
            pred_train = predict(result.model, train.inputs)
            pred_test = predict(result.model, test.inputs)
            predictions[label] = pred_test
            table_rows.append((
                k, seed, label, result.model.total_nodes,
                ppa(pred_train, train.targets, threshold),
                ppa(pred_test, test.targets, threshold),
                rmse(pred_train, train.targets),
                rmse(pred_test, test.targets),
            ))
            residuals = (pred_test - test.targets).ravel()
            rows = []
            for glyph_id in range(10):
                mask = test_ids == glyph_id
                if not np.any(mask):
                    continue
                rows.append((glyph_id, int(mask.sum()))
                            + _five_number(residuals[mask]))
            path = out_dir / f"casestudy_residuals_{label}_trial{k}.csv"
            _write_csv(path, "glyph_id,count,min,q1,median,q3,max", rows)
            written.append(path)
        written.extend(_write_grids(out_dir, k, p, seed, test, predictions))
    path = out_dir / "casestudy_table.csv"
    _write_csv(path,
               "trial,seed,model,nodes,ppa_train,ppa_test,rmse_train,rmse_test",
               table_rows)
    written.append(path)
    return written


def _write_grids(out_dir: Path, trial: int, p: dict, seed: int,
                 test: Dataset, predictions: dict) -> list[Path]:
    """Pixel dumps of sample test glyphs before and after angle correction."""
    count = min(p["grid_samples"], test.n_samples)
    picks = np.random.default_rng(derive_seed(seed, "grid")).choice(
        test.n_samples, size=count, replace=False)
    side = int(math.isqrt(test.n_features))
    header = "sample_index,actual_angle,predicted_angle," + ",".join(
        f"p{i}" for i in range(test.n_features))
    written = []
    variants = [("original", None)] + [(label, pred)
                                       for label, pred in predictions.items()]
    for label, pred in variants:
        rows = []
        for idx in picks:
            actual = float(test.targets[idx, 0])
            if pred is None:
                predicted = 0.0
                pixels = test.inputs[idx]
            else:
                predicted = float(np.asarray(pred)[idx, 0])
                img = test.inputs[idx].reshape(side, side)
                pixels = rotate_image(img, -predicted).ravel()
            rows.append((int(idx), actual, predicted) +
                        tuple(float(v) for v in pixels))
        path = out_dir / f"casestudy_grid_{label}_trial{trial}.csv"
        _write_csv(path, header, rows)
        written.append(path)
    return written


_RUNNERS = {
    "fig2": run_fig2,
    "fig3": run_fig3,
    "fig4": run_fig4,
    "casestudy": run_casestudy,
}


def run_experiment(spec: ExperimentSpec, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _RUNNERS[spec.name](spec, out_dir)
