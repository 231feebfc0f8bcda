"""Detection and positioning experiments, fingerprint baseline, metrics and reports.

Report files
------------
CSV (``emit_report(..., "csv", path)``): UTF-8, header
``model,combo,task,accuracy,mean_error_m``; one row per report; empty
fields where a metric does not apply; numbers formatted with ``repr``.

Structured text (``"json"``): a JSON list with one object per report
(``EvalReport.to_dict``), sorted keys, two-space indent.

Plot (``"svg"``): error CDF, one ``<polyline>`` per positioning report with
one vertex per test sample, x axis in metres, y axis cumulative fraction.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _container, gbt, nn
from .dataset import (
    SensingSample,
    SplitSpec,
    hypothesis_labels,
    split_campaign,
    stack_features,
    target_positions,
)

MODEL_KINDS = ("typea", "typeb", "typec", "baseline")
TASKS = ("detect", "position")


@dataclass(frozen=True, order=True)
class LinkCombo:
    receiver_ids: tuple[int, ...]

    def __post_init__(self):
        ids = tuple(sorted(int(i) for i in self.receiver_ids))
        if not ids or len(set(ids)) != len(ids):
            raise ValueError("a link combination needs distinct receiver ids")
        object.__setattr__(self, "receiver_ids", ids)

    @property
    def name(self) -> str:
        return "N" + "".join(str(i) for i in self.receiver_ids)

    @classmethod
    def parse(cls, name: str) -> LinkCombo:
        name = name.strip()
        if not name.upper().startswith("N") or not name[1:].isdigit():
            raise ValueError(f"link combination must look like N24, got {name!r}")
        return cls(tuple(int(c) for c in name[1:]))

    def __str__(self):
        return self.name


def all_combos(receiver_ids: Sequence[int] = (2, 3, 4)) -> list[LinkCombo]:
    """Every non-empty subset, singles first: N2, N3, N4, N23, N24, N34, N234."""
    ids = sorted(receiver_ids)
    return [LinkCombo(c) for r in range(1, len(ids) + 1) for c in combinations(ids, r)]


# -- metrics -------------------------------------------------------------------------------


def accuracy(probabilities, labels, threshold: float = 0.5) -> float:
    decisions = np.asarray(probabilities) >= threshold
    return float(np.mean(decisions == (np.asarray(labels) >= 0.5)))


def error_cdf(errors) -> list[tuple[float, float]]:
    """Empirical CDF evaluated at the sorted errors: ``(e_(i), i / n)``."""
    e = np.sort(np.asarray(errors, dtype=float))
    n = len(e)
    return [(float(v), (i + 1) / n) for i, v in enumerate(e)]


def position_errors(predicted, truth) -> np.ndarray:
    return np.linalg.norm(np.asarray(predicted, dtype=float) - np.asarray(truth, dtype=float), axis=1)


def detection_accuracy(model, x, labels) -> float:
    """Fraction of correct target/null decisions at threshold 0.5."""
    return accuracy(model.predict(x), labels)


def position_error_stats(model, x, positions) -> tuple[float, list[tuple[float, float]]]:
    errors = position_errors(model.predict(x), positions)
    return float(errors.mean()), error_cdf(errors)


# -- fingerprint baseline ------------------------------------------------------------------


def _sq_distances(database: np.ndarray, queries: np.ndarray, chunk: int = 64) -> np.ndarray:
    out = np.empty((len(queries), len(database)))
    for i in range(0, len(queries), chunk):
        diff = queries[i : i + chunk, None, :] - database[None, :, :]
        out[i : i + chunk] = np.einsum("qnd,qnd->qn", diff, diff)
    return out


@dataclass(frozen=True, eq=False)
class FingerprintBaseline:
    """1-nearest-neighbour lookup of flattened CIR features (Euclidean distance).

    The database is kept sorted by grid index so that ``argmin`` resolves ties
    to the lowest grid index.
    """

    features: np.ndarray
    targets: np.ndarray
    grid_index: np.ndarray
    task: str = "position"

    @classmethod
    def fit(cls, x, targets, grid_index, task: str = "position") -> FingerprintBaseline:
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        if len(x) == 0:
            raise ValueError("the fingerprint database must not be empty")
        order = np.argsort(np.asarray(grid_index), kind="stable")
        return cls(x[order], np.asarray(targets, dtype=float)[order], np.asarray(grid_index)[order], task)

    def nearest(self, x) -> np.ndarray:
        q = np.asarray(x, dtype=float).reshape(len(x), -1)
        if q.shape[1] != self.features.shape[1]:
            raise ValueError(f"query has {q.shape[1]} features, database has {self.features.shape[1]}")
        return np.argmin(_sq_distances(self.features, q), axis=1)

    def predict(self, x) -> np.ndarray:
        return self.targets[self.nearest(x)]


BASELINE_MAGIC = b"CIRSBAS1"
BASELINE_VERSION = 1


def save_baseline(model: FingerprintBaseline, path, metadata: dict | None = None) -> None:
    """Database checkpoint: header ``{task, n, d, metadata}``; payload is the
    features (float64, n x d), targets (float64, n x 2 or n) and grid
    indices (int64, n), little-endian, row-major, in that order."""
    header = {
        "format": "cirsense-baseline",
        "task": model.task,
        "n": int(len(model.features)),
        "d": int(model.features.shape[1]),
        "target_shape": list(model.targets.shape[1:]),
        "metadata": dict(metadata or {}),
    }
    payload = b"".join(
        np.ascontiguousarray(a, dtype=t).tobytes()
        for a, t in ((model.features, "<f8"), (model.targets, "<f8"), (model.grid_index, "<i8"))
    )
    _container.write(path, BASELINE_MAGIC, BASELINE_VERSION, header, payload)


def load_baseline(path, with_metadata: bool = False):
    header, payload = _container.read(path, BASELINE_MAGIC, BASELINE_VERSION)
    n, d = header["n"], header["d"]
    tshape = tuple(header["target_shape"])
    n_t = n * int(np.prod(tshape, dtype=int))
    if len(payload) != 8 * (n * d + n_t + n):
        raise _container.FormatError("baseline payload size does not match its header")
    x = np.frombuffer(payload, "<f8", n * d, 0).reshape(n, d).astype(float)
    y = np.frombuffer(payload, "<f8", n_t, 8 * n * d).reshape((n,) + tshape).astype(float)
    g = np.frombuffer(payload, "<i8", n, 8 * (n * d + n_t)).astype(np.int64)
    model = FingerprintBaseline(x, y, g, header["task"])
    return (model, header["metadata"]) if with_metadata else model


def baseline_predict(train_features, train_positions, train_grid_index, query) -> tuple[float, float]:
    """Position of the training sample closest to ``query``."""
    model = FingerprintBaseline.fit(train_features, train_positions, train_grid_index)
    p = model.predict(np.asarray(query, dtype=float)[None])[0]
    return (float(p[0]), float(p[1]))


# -- models --------------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSettings:
    train: nn.TrainConfig = nn.TrainConfig()
    cnn_blocks: int = 3
    cnn_kernels: int = 32
    cnn_kernel_size: int = 5
    cnn_hidden_units: int = 64
    boost: gbt.BoostConfig = gbt.BoostConfig()
    boost_grid: dict | None = None
    boost_refit: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["boost_grid"] = {k: list(v) for k, v in (self.boost_grid or gbt.DEFAULT_GRID).items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelSettings:
        d = dict(d)
        if "train" in d:
            d["train"] = nn.TrainConfig(**d["train"])
        if "boost" in d:
            d["boost"] = gbt.BoostConfig(**d["boost"])
        if d.get("boost_grid") is not None:
            d["boost_grid"] = {k: tuple(v) for k, v in d["boost_grid"].items()}
        return cls(**d)


@dataclass(frozen=True)
class CellData:
    x_train: np.ndarray
    y_train: np.ndarray
    g_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    g_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def _cell_data(splits, combo: LinkCombo, task: str) -> CellData:
    def part(samples):
        if task == "position":
            samples = [s for s in samples if s.is_target]
            y = target_positions(samples)
        else:
            y = hypothesis_labels(samples)
        if not samples:
            return np.empty((0,)), y, np.empty(0, dtype=int)
        x = stack_features(samples, combo.receiver_ids)
        return x, y, np.array([s.bin_index for s in samples])

    xt, yt, gt = part(splits.train)
    xv, yv, gv = part(splits.val)
    xs, ys, _ = part(splits.test)
    return CellData(xt, yt, gt, xv, yv, gv, xs, ys)


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: str
    task: str
    model: object
    details: dict = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        if self.kind == "typec":
            return self.model.predict(np.asarray(x).reshape(len(x), -1))
        return self.model.predict(x)


def fit_model(kind: str, task: str, data: CellData, settings: ModelSettings, channels_per_link: int, n_links: int):
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    has_val = len(data.x_val) > 0
    if kind in ("typea", "typeb"):
        spec = nn.default_spec(
            "TypeA" if kind == "typea" else "TypeB",
            n_links,
            task,
            input_length=data.x_train.shape[2],
            channels_per_link=channels_per_link,
            n_blocks=settings.cnn_blocks,
            kernels=settings.cnn_kernels,
            kernel_size=settings.cnn_kernel_size,
            hidden_units=settings.cnn_hidden_units,
        )
        model = nn.train(
            spec,
            data.x_train,
            data.y_train,
            data.x_val if has_val else None,
            data.y_val if has_val else None,
            settings.train,
        )
        details = {
            "n_params": spec.n_params(),
            "best_epoch": model.history["best_epoch"],
            "epochs_run": model.history["epochs_run"],
        }
        return FittedModel(kind, task, model, details)

    if kind == "baseline":
        # The fingerprint database holds every training bin (fit and validation).
        x = np.concatenate([data.x_train, data.x_val]) if has_val else data.x_train
        y = np.concatenate([data.y_train, data.y_val]) if has_val else data.y_train
        g = np.concatenate([data.g_train, data.g_val]) if has_val else data.g_train
        return FittedModel(kind, task, FingerprintBaseline.fit(x, y, g, task))

    objective = "squared" if task == "position" else "logistic"
    xt = data.x_train.reshape(len(data.x_train), -1)
    details = {}
    cfg = settings.boost
    if has_val:
        xv = data.x_val.reshape(len(data.x_val), -1)
        cfg, table = gbt.grid_search(xt, data.y_train, xv, data.y_val, settings.boost_grid, cfg, objective)
        details["grid_search"] = table
        if settings.boost_refit:
            xt = np.concatenate([xt, xv])
            y = np.concatenate([data.y_train, data.y_val])
        else:
            y = data.y_train
    else:
        y = data.y_train
    details["selected"] = dataclasses.asdict(cfg)
    return FittedModel(kind, task, gbt.fit_ensemble(xt, y, cfg, objective), details)


# -- reports -------------------------------------------------------------------------------


@dataclass(eq=False)
class EvalReport:
    task: str
    model_id: str
    combo: LinkCombo
    accuracy: float | None = None
    mean_error_m: float | None = None
    error_cdf: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    train_bins: tuple = ()
    val_bins: tuple = ()
    test_bins: tuple = ()
    details: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "model_id": self.model_id,
            "combo": self.combo.name,
            "accuracy": self.accuracy,
            "mean_error_m": self.mean_error_m,
            "error_cdf": [list(p) for p in self.error_cdf],
            "config": self.config,
            "seeds": self.seeds,
            "train_bins": list(self.train_bins),
            "val_bins": list(self.val_bins),
            "test_bins": list(self.test_bins),
            "details": self.details,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(
            task=d["task"],
            model_id=d["model_id"],
            combo=LinkCombo.parse(d["combo"]),
            accuracy=d.get("accuracy"),
            mean_error_m=d.get("mean_error_m"),
            error_cdf=[tuple(p) for p in d.get("error_cdf", [])],
            config=d.get("config", {}),
            seeds=d.get("seeds", {}),
            train_bins=tuple(d.get("train_bins", ())),
            val_bins=tuple(d.get("val_bins", ())),
            test_bins=tuple(d.get("test_bins", ())),
            details=d.get("details", {}),
            error=d.get("error"),
        )


def _run_cell(splits, kind: str, combo: LinkCombo, task: str, settings: ModelSettings, channels: int) -> EvalReport:
    report = EvalReport(
        task=task,
        model_id=kind,
        combo=combo,
        config=settings.to_dict(),
        seeds={"train": settings.train.seed, "boost": settings.boost.seed},
        train_bins=tuple(sorted(splits.train_bins)),
        val_bins=tuple(sorted(splits.val_bins)),
        test_bins=tuple(sorted(splits.test_bins)),
    )
    try:
        data = _cell_data(splits, combo, task)
        fitted = fit_model(kind, task, data, settings, channels, len(combo.receiver_ids))
        report.details = fitted.details
        if task == "detect":
            report.accuracy = detection_accuracy(fitted, data.x_test, data.y_test)
        else:
            report.mean_error_m, report.error_cdf = position_error_stats(fitted, data.x_test, data.y_test)
    except Exception as exc:  # a failed cell is reported, the suite continues
        report.error = f"{type(exc).__name__}: {exc}"
    return report


def check_split_hygiene(report: EvalReport) -> None:
    train = set(report.train_bins) | set(report.val_bins)
    overlap = train & set(report.test_bins)
    if overlap:
        raise AssertionError(f"{report.model_id}/{report.combo}: test bins in training: {sorted(overlap)[:10]}")


def run_experiment_suite(
    samples: Sequence[SensingSample],
    models: Sequence[str],
    combos: Sequence[LinkCombo],
    split: SplitSpec,
    task: str = "position",
    settings: ModelSettings = ModelSettings(),
    max_workers: int = 1,
) -> list[EvalReport]:
    """Train and evaluate every (model, combo) cell on the bin-level split.

    Reports come back in (model, combo) order whatever the execution schedule.
    """
    splits = split_campaign(samples, split)
    channels = samples[0].features.channels_per_link
    cells = [(kind, combo) for kind in models for combo in combos]
    if max_workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers) as pool:
            futures = [pool.submit(_run_cell, splits, k, c, task, settings, channels) for k, c in cells]
            reports = [f.result() for f in futures]
    else:
        reports = [_run_cell(splits, k, c, task, settings, channels) for k, c in cells]
    for r in reports:
        check_split_hygiene(r)
    return reports


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def reports_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "combo", "task", "accuracy", "mean_error_m"])
    for r in reports:
        writer.writerow([r.model_id, r.combo.name, r.task, _fmt(r.accuracy), _fmt(r.mean_error_m)])
    return buf.getvalue()


def reports_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2) + "\n"


def load_reports_json(text: str) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(text)]


_COLORS = ("#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def cdf_svg(reports: Sequence[EvalReport], width: int = 480, height: int = 360) -> str:
    curves = [r for r in reports if r.error_cdf]
    left, right, top, bottom = 50, 20, 20, 40
    pw, ph = width - left - right, height - top - bottom
    x_max = max((r.error_cdf[-1][0] for r in curves), default=1.0)
    x_max = max(x_max, 1e-9)

    def sx(v):
        return f"{left + pw * v / x_max:.3f}"

    def sy(v):
        return f"{top + ph * (1 - v):.3f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">position error (m)</text>',
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">CDF</text>',
    ]
    for i in range(6):
        v = x_max * i / 5
        out.append(f'<text x="{sx(v)}" y="{top + ph + 15}" text-anchor="middle" font-size="10">{v:.2f}</text>')
        out.append(f'<text x="{left - 5}" y="{sy(i / 5)}" text-anchor="end" font-size="10">{i / 5:.1f}</text>')
    for i, r in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(e)},{sy(c)}" for e, c in r.error_cdf)
        label = f"{r.model_id} {r.combo.name}"
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{label}</title></polyline>')
        out.append(f'<text x="{left + pw - 5}" y="{top + 14 * (i + 1)}" text-anchor="end" font-size="11" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(reports: Sequence[EvalReport], fmt: str, path) -> None:
    if fmt == "csv":
        text = reports_csv(reports)
    elif fmt in ("json", "structured-text"):
        text = reports_json(reports)
    elif fmt in ("svg", "svg-plot"):
        text = cdf_svg(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def comparison_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text summary, one line per report."""
    lines = [f"{'task':8} {'model':9} {'combo':6} {'accuracy':>9} {'mean_err_m':>10}"]
    for r in reports:
        acc = "" if r.accuracy is None else f"{r.accuracy:.4f}"
        err = "" if r.mean_error_m is None else f"{r.mean_error_m:.4f}"
        tail = f"  ERROR {r.error}" if r.error else ""
        lines.append(f"{r.task:8} {r.model_id:9} {r.combo.name:6} {acc:>9} {err:>10}{tail}")
    return "\n".join(lines) + "\n"
