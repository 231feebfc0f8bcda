"""Run configuration: one object describing a whole simulate/train/eval run.

A config file is YAML (or JSON, which YAML accepts) with these optional
top-level sections; anything omitted keeps its default::

    seed: 0
    out_dir: cirsense-out
    sweep:    {center_frequency_hz, bandwidth_hz, num_points, noise_std, calibration_delay_s}
    grid:     {n_cols, n_rows, cell_m, origin, pinned_points}
    scene:    {n_clutter, seed, target_body_radius_m, target_reflectivity, target_blockage_db}
    split:    {n_test, val_fraction, seed}
    features: {k_taps, mode, normalize, augment}
    models:   {train: {...}, boost: {...}, boost_grid: {...}, boost_refit, cnn_blocks, ...}
    protocol: [{task: detect|position, models: [...], combos: [...]}, ...]

``scene.seed`` and ``split.seed`` default to the global ``seed``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import gbt, nn
from .dataset import FeatureOptions, GridSpec, SplitSpec
from .evaluation import MODEL_KINDS, TASKS, LinkCombo, ModelSettings, all_combos
from .sim import ConfigError, Scene, SweepConfig, Target, default_scene

ALL_COMBOS = tuple(c.name for c in all_combos())


@dataclass(frozen=True)
class SceneOptions:
    n_clutter: int = 16
    seed: int | None = None
    target_body_radius_m: float = 0.25
    target_reflectivity: float = 0.5
    target_blockage_db: float = 20.0

    def problems(self) -> list[str]:
        out = []
        if self.n_clutter < 0:
            out.append("scene.n_clutter must be >= 0")
        if not self.target_body_radius_m > 0:
            out.append("scene.target_body_radius_m must be > 0")
        if self.target_reflectivity < 0:
            out.append("scene.target_reflectivity must be >= 0")
        return out


@dataclass(frozen=True)
class SplitOptions:
    n_test: int = 125
    val_fraction: float = 0.3
    seed: int | None = None

    def problems(self, n_bins: int | None = None) -> list[str]:
        out = []
        if self.n_test < 1 or (n_bins is not None and self.n_test >= n_bins):
            out.append(f"split.n_test must be in [1, number of grid bins{'' if n_bins is None else f' = {n_bins}'})")
        if not 0 <= self.val_fraction < 1:
            out.append("split.val_fraction must be in [0, 1)")
        return out


@dataclass(frozen=True)
class ProtocolEntry:
    task: str
    models: tuple[str, ...]
    combos: tuple[str, ...]

    def problems(self, where: str) -> list[str]:
        out = []
        if self.task not in TASKS:
            out.append(f"{where}.task must be one of {list(TASKS)}, got {self.task!r}")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models:
            out.append(f"{where}.models must be a non-empty subset of {list(MODEL_KINDS)} (bad: {bad})")
        bad = [c for c in self.combos if c not in ALL_COMBOS]
        if bad or not self.combos:
            out.append(f"{where}.combos must be a non-empty subset of {list(ALL_COMBOS)} (bad: {bad})")
        return out


# Detection with Type-A over every link combination, then positioning with
# Type-A on one and three links and the remaining models on three links.
DEFAULT_PROTOCOL = (
    ProtocolEntry("detect", ("typea",), ALL_COMBOS),
    ProtocolEntry("position", ("typea",), ("N2", "N234")),
    ProtocolEntry("position", ("typeb", "typec", "baseline"), ("N234",)),
)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "cirsense-out"
    sweep: SweepConfig = SweepConfig()
    grid: GridSpec = GridSpec()
    scene: SceneOptions = SceneOptions()
    split: SplitOptions = SplitOptions()
    features: FeatureOptions = FeatureOptions()
    models: ModelSettings = ModelSettings()
    protocol: tuple[ProtocolEntry, ...] = DEFAULT_PROTOCOL

    def build_scene(self) -> Scene:
        seed = self.seed if self.scene.seed is None else self.scene.seed
        return default_scene(seed, self.scene.n_clutter)

    def target_template(self) -> Target:
        s = self.scene
        return Target((0.0, 0.0), s.target_body_radius_m, s.target_reflectivity, s.target_blockage_db)

    def build_split(self) -> SplitSpec:
        seed = self.seed if self.split.seed is None else self.split.seed
        return SplitSpec.random(self.grid.size, self.split.n_test, self.split.val_fraction, seed)

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "sweep": dataclasses.asdict(self.sweep),
            "grid": dataclasses.asdict(self.grid),
            "scene": dataclasses.asdict(self.scene),
            "split": dataclasses.asdict(self.split),
            "features": dataclasses.asdict(self.features),
            "models": self.models.to_dict(),
            "protocol": [{"task": p.task, "models": list(p.models), "combos": list(p.combos)} for p in self.protocol],
        }
        d["grid"]["origin"] = list(d["grid"]["origin"])
        return d

    def snapshot(self) -> str:
        """Canonical JSON text of the full config; byte-stable for equal configs."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


_SECTIONS = {"seed", "out_dir", "sweep", "grid", "scene", "split", "features", "models", "protocol"}


def _build(cls, raw, section: str, problems: list[str]):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        problems.append(f"{section} must be a mapping")
        return None
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        problems.append(f"{section}: unknown keys {unknown}")
    try:
        return cls(**{k: v for k, v in raw.items() if k in names})
    except ConfigError as exc:
        problems.extend(exc.problems)
    except (TypeError, ValueError) as exc:
        problems.extend(f"{section}: {p}" for p in str(exc).split("; "))
    return None


def _build_models(raw, problems: list[str]) -> ModelSettings | None:
    if raw is None:
        return ModelSettings()
    if not isinstance(raw, dict):
        problems.append("models must be a mapping")
        return None
    raw = dict(raw)
    train = _build(nn.TrainConfig, raw.pop("train", None), "models.train", problems)
    boost = _build(gbt.BoostConfig, raw.pop("boost", None), "models.boost", problems)
    if train is not None:
        problems.extend(f"models.{p}" for p in train.problems())
    grid = raw.pop("boost_grid", None)
    if grid is not None:
        if not isinstance(grid, dict) or set(grid) != set(gbt.DEFAULT_GRID):
            problems.append(f"models.boost_grid must map exactly {sorted(gbt.DEFAULT_GRID)} to lists")
            grid = None
        else:
            grid = {k: tuple(v) for k, v in grid.items()}
            if any(len(v) == 0 for v in grid.values()):
                problems.append("models.boost_grid lists must be non-empty")
    names = {f.name for f in dataclasses.fields(ModelSettings)} - {"train", "boost", "boost_grid"}
    unknown = sorted(set(raw) - names)
    if unknown:
        problems.append(f"models: unknown keys {unknown}")
    for key in ("cnn_blocks", "cnn_kernels", "cnn_kernel_size", "cnn_hidden_units"):
        if key in raw and not (isinstance(raw[key], int) and raw[key] >= 1):
            problems.append(f"models.{key} must be an integer >= 1")
    if train is None or boost is None:
        return None
    return ModelSettings(train=train, boost=boost, boost_grid=grid, **{k: v for k, v in raw.items() if k in names})


def _build_protocol(raw, problems: list[str]):
    if raw is None:
        return DEFAULT_PROTOCOL
    if not isinstance(raw, list) or not raw:
        problems.append("protocol must be a non-empty list")
        return None
    entries = []
    for i, item in enumerate(raw):
        where = f"protocol[{i}]"
        if not isinstance(item, dict) or set(item) - {"task", "models", "combos"}:
            problems.append(f"{where} must be a mapping with keys task, models, combos")
            continue
        entry = ProtocolEntry(
            str(item.get("task", "")),
            tuple(str(m) for m in item.get("models", ())),
            tuple(str(c) for c in item.get("combos", ALL_COMBOS)),
        )
        problems.extend(entry.problems(where))
        entries.append(entry)
    return tuple(entries)


def config_from_dict(raw: dict | None) -> RunConfig:
    """Validate ``raw`` and build a RunConfig; raises ConfigError listing every problem."""
    raw = dict(raw or {})
    problems: list[str] = []
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        problems.append(f"unknown top-level keys {unknown}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed must be a non-negative integer")
    out_dir = raw.get("out_dir", RunConfig.out_dir)
    if not isinstance(out_dir, str) or not out_dir:
        problems.append("out_dir must be a non-empty string")

    grid_raw = raw.get("grid")
    if isinstance(grid_raw, dict) and "origin" in grid_raw:
        grid_raw = {**grid_raw, "origin": tuple(grid_raw["origin"])}
    sweep = _build(SweepConfig, raw.get("sweep"), "sweep", problems)
    grid = _build(GridSpec, grid_raw, "grid", problems)
    scene = _build(SceneOptions, raw.get("scene"), "scene", problems)
    split = _build(SplitOptions, raw.get("split"), "split", problems)
    features = _build(FeatureOptions, raw.get("features"), "features", problems)
    models = _build_models(raw.get("models"), problems)
    protocol = _build_protocol(raw.get("protocol"), problems)

    if scene is not None:
        problems.extend(scene.problems())
    if split is not None:
        problems.extend(split.problems(grid.size if grid is not None else None))
    if features is not None:
        problems.extend(features.problems(sweep.num_points if sweep is not None else None))
    if problems:
        raise ConfigError(problems)
    return RunConfig(seed, out_dir, sweep, grid, scene, split, features, models, protocol)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML/JSON config file (or defaults), apply flag ``overrides``, validate.

    ``overrides`` maps dotted keys (``"split.seed"``) or top-level keys to
    values; they win over the file.
    """
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read config file {path}: {exc.strerror}"]) from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"config file {path} is not valid YAML: {exc}".replace("\n", " ")]) from exc
        if not isinstance(raw, dict):
            raise ConfigError([f"config file {path} must hold a mapping at the top level"])
    for key, value in (overrides or {}).items():
        node = raw
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return config_from_dict(raw)
