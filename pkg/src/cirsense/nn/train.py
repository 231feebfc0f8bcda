"""Mini-batch training with early stopping, and network checkpoints.

Checkpoint file: shared container (``cirsense._container``) with magic
``b"CIRSCNN1"``, format version 1.  The JSON header holds ``spec``
(``NetworkSpec.to_dict``), ``hyper``, ``history``, ``metadata`` and
``params``: a list of ``[name, shape]`` in payload order.  The payload is
the concatenation of every parameter array as little-endian float64,
row-major, in that order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .. import _container
from .network import (
    NetworkSpec,
    TrainingDivergence,
    compute_loss,
    init_params,
    network_backward,
    network_forward,
)
from .layers import sigmoid
from .optim import OptimizerState, adam_step

CHECKPOINT_MAGIC = b"CIRSCNN1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 20

    def problems(self) -> list[str]:
        out = []
        if self.epochs < 1:
            out.append("train.epochs must be >= 1")
        if self.batch_size < 1:
            out.append("train.batch_size must be >= 1")
        if not self.learning_rate > 0:
            out.append("train.learning_rate must be > 0")
        if self.patience < 1:
            out.append("train.patience must be >= 1")
        return out


@dataclass(frozen=True, eq=False)
class TrainedNetwork:
    spec: NetworkSpec
    params: dict
    hyper: TrainConfig
    history: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Target probabilities (detect) or positions in metres (position)."""
        outs = [network_forward(self.spec, self.params, x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        out = np.concatenate(outs, axis=0)
        return sigmoid(out) if self.spec.task == "detect" else out


def evaluate_loss(spec: NetworkSpec, params, x, y, batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, len(x), batch_size):
        out = network_forward(spec, params, x[i : i + batch_size])
        loss, _ = compute_loss(spec, out, y[i : i + batch_size])
        total += loss * len(out)
    return total / len(x)


def train(
    spec: NetworkSpec,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    hyper: TrainConfig = TrainConfig(),
    metadata: dict | None = None,
) -> TrainedNetwork:
    """Adam training; keeps the parameters with the best validation loss.

    Without a validation set the training loss drives early stopping.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    has_val = x_val is not None and len(x_val) > 0
    params = init_params(spec, hyper.seed)
    if spec.task == "position":
        # Start the regression head at the mean training position.
        last = max(k for k in params if k.startswith("head.") and k.endswith(".b"))
        params[last] = y_train.mean(axis=0).astype(float)
    state = OptimizerState(learning_rate=hyper.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([int(hyper.seed), 0xBA7C]))

    history = {"train_loss": [], "val_loss": []}
    best = (np.inf, params, 0)
    n = len(x_train)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, grads = network_backward(spec, params, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergence("non-finite training loss", step=state.step, epoch=epoch)
            params, state = adam_step(state, params, grads)
            running += loss * len(idx)
        history["train_loss"].append(running / n)
        if has_val:
            monitor = evaluate_loss(spec, params, x_val, y_val)
            history["val_loss"].append(monitor)
        else:
            monitor = evaluate_loss(spec, params, x_train, y_train)
        if not np.isfinite(monitor):
            raise TrainingDivergence("non-finite monitored loss", step=state.step, epoch=epoch)
        if monitor < best[0]:
            best = (monitor, params, epoch)
        elif epoch - best[2] >= hyper.patience:
            break
    history["best_epoch"] = best[2]
    history["epochs_run"] = len(history["train_loss"])
    return TrainedNetwork(spec, best[1], hyper, history, dict(metadata or {}))


def save_network(model: TrainedNetwork, path) -> None:
    names = sorted(model.params)
    header = {
        "format": "cirsense-cnn",
        "spec": model.spec.to_dict(),
        "hyper": dataclasses.asdict(model.hyper),
        "history": model.history,
        "metadata": model.metadata,
        "params": [[n, list(model.params[n].shape)] for n in names],
    }
    payload = b"".join(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes() for n in names)
    _container.write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, payload)


def load_network(path) -> TrainedNetwork:
    header, payload = _container.read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    params = {}
    offset = 0
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count
    if offset != len(payload):
        raise _container.FormatError("checkpoint payload size does not match its parameter table")
    return TrainedNetwork(
        NetworkSpec.from_dict(header["spec"]),
        params,
        TrainConfig(**header["hyper"]),
        header["history"],
        header["metadata"],
    )
