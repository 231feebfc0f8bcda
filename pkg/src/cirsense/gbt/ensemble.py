"""Boosted ensembles (one per output dimension), grid search and checkpoints.

Checkpoint file: shared container (``cirsense._container``) with magic
``b"CIRSGBT1"``, format version 1.  The JSON header holds ``config``
(BoostConfig fields), ``objective``, ``base_score`` (one float per output),
``metadata`` and ``trees``: a list of ``[output, n_nodes]`` in payload order.
For every tree the payload stores, little-endian and in this order::

    feature       int32[n_nodes]   (-1 marks a leaf)
    threshold     float64[n_nodes] (NaN at leaves)
    left          int32[n_nodes]   (-1 at leaves)
    right         int32[n_nodes]   (-1 at leaves)
    default_left  uint8[n_nodes]
    value         float64[n_nodes] (leaf weight; unused at internal nodes)
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from .. import _container
from .split import BinnedMatrix
from .tree import Tree, fit_tree

CHECKPOINT_MAGIC = b"CIRSGBT1"
CHECKPOINT_VERSION = 1

DEFAULT_GRID = {
    "n_estimators": (100, 300, 600),
    "max_depth": (3, 5, 8),
    "learning_rate": (0.05, 0.1, 0.3),
}


@dataclass(frozen=True)
class BoostConfig:
    n_estimators: int = 100
    max_depth: int = 5
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    n_quantile_candidates: int = 32
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.n_estimators < 1:
            out.append("n_estimators must be >= 1")
        if self.max_depth < 1:
            out.append("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            out.append("learning_rate must lie in (0, 1]")
        if self.reg_lambda < 0:
            out.append("reg_lambda must be >= 0")
        if self.gamma < 0:
            out.append("gamma must be >= 0")
        if self.n_quantile_candidates < 1:
            out.append("n_quantile_candidates must be >= 1")
        if not 0 < self.subsample <= 1:
            out.append("subsample must lie in (0, 1]")
        return out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class Ensemble:
    trees_per_output: list
    base_score: np.ndarray
    config: BoostConfig
    objective: str = "squared"
    history: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return len(self.trees_per_output)

    def predict_margin(self, x, n_trees: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lr = self.config.learning_rate
        out = np.empty((len(x), self.n_outputs))
        for d, trees in enumerate(self.trees_per_output):
            pred = np.full(len(x), self.base_score[d])
            for tree in trees[:n_trees]:
                pred += lr * tree.predict(x)
            out[:, d] = pred
        return out

    def predict(self, x, n_trees: int | None = None) -> np.ndarray:
        """Regression outputs, or target probabilities for the logistic objective.

        Single-output ensembles return a 1-D array.
        """
        out = self.predict_margin(x, n_trees)
        if self.objective == "logistic":
            out = _sigmoid(out)
        return out[:, 0] if self.n_outputs == 1 else out


def _gradients(objective: str, pred, y):
    if objective == "squared":
        return pred - y, np.ones_like(y)
    p = _sigmoid(pred)
    return p - y, np.maximum(p * (1 - p), 1e-16)


def _loss(objective: str, pred, y) -> float:
    if objective == "squared":
        return float(np.mean((pred - y) ** 2))
    return float(np.mean(np.maximum(pred, 0) - pred * y + np.log1p(np.exp(-np.abs(pred)))))


def fit_ensemble(
    features,
    targets,
    cfg: BoostConfig = BoostConfig(),
    objective: str = "squared",
    eval_features=None,
    eval_targets=None,
    eval_every: tuple[int, ...] = (),
) -> Ensemble:
    """Boost one ensemble per target column.

    Each round fits a tree to the loss gradients at the current predictions
    and adds it with shrinkage ``learning_rate``.  When an evaluation set is
    given, its loss after each round count in ``eval_every`` is recorded in
    ``history["eval_loss"]`` (one dict per output).
    """
    if objective not in ("squared", "logistic"):
        raise ValueError(f"unknown objective {objective!r}")
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    y2 = y.reshape(len(y), -1)
    binned_const = BinnedMatrix.from_data(x, None, cfg.n_quantile_candidates) if objective == "squared" else None
    n_sub = max(1, int(round(cfg.subsample * len(x))))
    has_eval = eval_features is not None
    if has_eval:
        xe = np.asarray(eval_features, dtype=float)
        ye = np.asarray(eval_targets, dtype=float).reshape(len(xe), -1)

    trees_per_output, base, train_loss, eval_loss = [], [], [], []
    for d in range(y2.shape[1]):
        yd = y2[:, d]
        if objective == "squared":
            b = float(yd.mean())
        else:
            p = float(np.clip(yd.mean(), 1e-6, 1 - 1e-6))
            b = float(np.log(p / (1 - p)))
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), d, 0xB005]))
        pred = np.full(len(x), b)
        if has_eval:
            pred_eval = np.full(len(xe), b)
        trees, losses, staged = [], [], {}
        for r in range(cfg.n_estimators):
            g, h = _gradients(objective, pred, yd)
            rows = None if cfg.subsample >= 1 else np.sort(rng.choice(len(x), size=n_sub, replace=False))
            binned = binned_const or BinnedMatrix.from_data(x, h, cfg.n_quantile_candidates)
            tree = fit_tree(g, h, x, cfg.max_depth, cfg.reg_lambda, cfg.gamma, binned=binned, rows=rows)
            trees.append(tree)
            pred = pred + cfg.learning_rate * tree.predict(x)
            losses.append(_loss(objective, pred, yd))
            if has_eval:
                pred_eval = pred_eval + cfg.learning_rate * tree.predict(xe)
                if r + 1 in eval_every:
                    staged[r + 1] = _loss(objective, pred_eval, ye[:, d])
        trees_per_output.append(trees)
        base.append(b)
        train_loss.append(losses)
        eval_loss.append(staged)
    history = {"train_loss": train_loss}
    if has_eval:
        history["eval_loss"] = eval_loss
    return Ensemble(trees_per_output, np.array(base), cfg, objective, history)


def grid_search(
    features,
    targets,
    val_features,
    val_targets,
    grids: dict | None = None,
    base: BoostConfig = BoostConfig(),
    objective: str = "squared",
) -> tuple[BoostConfig, list[dict]]:
    """Pick the configuration with the lowest validation loss.

    Every combination of ``n_estimators`` x ``max_depth`` x ``learning_rate``
    is scored.  Boosting is sequential and seeded, so the ensemble with fewer
    trees is a prefix of the longest one: each (depth, rate) pair is fitted
    once and scored at every tree count.  Ties prefer fewer trees, then
    shallower trees.  Returns ``(best_config, table)`` where ``table`` has one
    row per combination in grid order.
    """
    grids = dict(DEFAULT_GRID if grids is None else grids)
    counts = tuple(sorted(set(int(n) for n in grids["n_estimators"])))
    scores = {}
    for depth, rate in itertools.product(grids["max_depth"], grids["learning_rate"]):
        cfg = dataclasses.replace(base, n_estimators=max(counts), max_depth=int(depth), learning_rate=float(rate))
        ens = fit_ensemble(features, targets, cfg, objective, val_features, val_targets, eval_every=counts)
        for n in counts:
            # mean over outputs of the per-output validation loss
            scores[(n, int(depth), float(rate))] = float(np.mean([e[n] for e in ens.history["eval_loss"]]))

    table = []
    for n, depth, rate in itertools.product(grids["n_estimators"], grids["max_depth"], grids["learning_rate"]):
        table.append(
            {
                "n_estimators": int(n),
                "max_depth": int(depth),
                "learning_rate": float(rate),
                "val_loss": scores[(int(n), int(depth), float(rate))],
            }
        )
    best = min(table, key=lambda row: (row["val_loss"], row["n_estimators"], row["max_depth"]))
    cfg = dataclasses.replace(
        base, n_estimators=best["n_estimators"], max_depth=best["max_depth"], learning_rate=best["learning_rate"]
    )
    return cfg, table


def save_ensemble(model: Ensemble, path) -> None:
    tree_table, chunks = [], []
    for d, trees in enumerate(model.trees_per_output):
        for t in trees:
            tree_table.append([d, t.n_nodes])
            chunks += [
                t.feature.astype("<i4").tobytes(),
                t.threshold.astype("<f8").tobytes(),
                t.left.astype("<i4").tobytes(),
                t.right.astype("<i4").tobytes(),
                t.default_left.astype("u1").tobytes(),
                t.value.astype("<f8").tobytes(),
            ]
    header = {
        "format": "cirsense-gbt",
        "config": dataclasses.asdict(model.config),
        "objective": model.objective,
        "base_score": [float(b) for b in model.base_score],
        "metadata": model.metadata,
        "trees": tree_table,
    }
    _container.write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, b"".join(chunks))


def load_ensemble(path) -> Ensemble:
    header, payload = _container.read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    n_out = len(header["base_score"])
    trees_per_output = [[] for _ in range(n_out)]
    offset = 0

    def take(dtype, count):
        nonlocal offset
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr

    for d, n in header["trees"]:
        tree = Tree(
            take("<i4", n).astype(np.int64),
            take("<f8", n).astype(float),
            take("<i4", n).astype(np.int64),
            take("<i4", n).astype(np.int64),
            take("u1", n).astype(bool),
            take("<f8", n).astype(float),
        )
        trees_per_output[d].append(tree)
    if offset != len(payload):
        raise _container.FormatError("checkpoint payload size does not match its tree table")
    return Ensemble(
        trees_per_output,
        np.array(header["base_score"], dtype=float),
        BoostConfig(**header["config"]),
        header["objective"],
        {},
        header["metadata"],
    )
