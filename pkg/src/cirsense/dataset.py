"""Labelled measurement campaigns: floor grid, paired null/target samples,
bin-level train/val/test splits and file persistence.

Dataset file
------------
The dataset file uses the shared container (see ``cirsense._container``)
with magic ``b"CIRSDSET"`` and format version 1.  The JSON header carries
the grid spec, sweep config, scene template, feature options, campaign seed,
``n_samples`` and the shared ``feature_layout``.  The payload is a sequence of
per-sample records, each::

    <B  hypothesis (0 = null, 1 = target)
    <i  bin_index
    <i  grid_index (-1 for null samples)
    <d  x position in metres (NaN for null samples)
    <d  y position in metres (NaN for null samples)
    <Q  sample seed
    <H  n_links
    <H  n_rows (links * channels per link)
    <H  k_taps
    <H  link id, repeated n_links times
    <d  feature value, repeated n_rows * k_taps times (row-major)

Sweep trace text file
---------------------
One file per link, UTF-8, comma separated.  Lines starting with ``#`` are
comments; ``# link_id=<int>`` names the receiver.  An optional column header
``frequency_hz,real,imag`` may precede the data rows, one swept frequency per
row in strictly increasing frequency order, floats written with ``repr``.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _container
from ._container import FormatError
from .dsp import FeatureVector, cir_from_sweep, features_from_cirs
from .sim import (
    ConfigError,
    FrequencySweep,
    Scene,
    SweepConfig,
    Target,
    scene_from_dict,
    scene_to_dict,
    synthesize_scene_sweeps,
)

DATASET_MAGIC = b"CIRSDSET"
DATASET_VERSION = 1
DEPLOYMENT_GRID_POINTS = 462

_RECORD = struct.Struct("<BiiddQHHH")
TRACE_COLUMNS = "frequency_hz,real,imag"


@dataclass(frozen=True)
class GridSpec:
    n_cols: int = 21
    n_rows: int = 22
    cell_m: float = 0.2
    origin: tuple[float, float] = (0.0, 0.0)
    pinned_points: int | None = DEPLOYMENT_GRID_POINTS

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.n_cols < 1 or self.n_rows < 1:
            out.append("grid.n_cols and grid.n_rows must be >= 1")
        if not self.cell_m > 0:
            out.append("grid.cell_m must be > 0")
        if self.pinned_points is not None and self.n_cols * self.n_rows != self.pinned_points:
            out.append(
                f"grid.n_cols * grid.n_rows must equal the pinned point count {self.pinned_points} "
                f"(got {self.n_cols}x{self.n_rows} = {self.n_cols * self.n_rows})"
            )
        return out

    @property
    def size(self) -> int:
        return self.n_cols * self.n_rows


def grid_to_position(spec: GridSpec, index: int) -> tuple[float, float]:
    """Row-major cell centre of grid ``index``."""
    if not 0 <= index < spec.size:
        raise IndexError(f"grid index {index} out of range [0, {spec.size})")
    row, col = divmod(int(index), spec.n_cols)
    return (spec.origin[0] + (col + 0.5) * spec.cell_m, spec.origin[1] + (row + 0.5) * spec.cell_m)


def position_to_grid(spec: GridSpec, position) -> int:
    col = math.floor((position[0] - spec.origin[0]) / spec.cell_m)
    row = math.floor((position[1] - spec.origin[1]) / spec.cell_m)
    if not (0 <= col < spec.n_cols and 0 <= row < spec.n_rows):
        raise IndexError(f"position {position} lies outside the grid")
    return row * spec.n_cols + col


@dataclass(frozen=True)
class FeatureOptions:
    k_taps: int = 256
    mode: str = "magnitude"
    normalize: str = "per-link-max"
    augment: int = 1

    def problems(self, num_points: int | None = None) -> list[str]:
        out = []
        if self.k_taps < 1 or (num_points is not None and self.k_taps > num_points):
            out.append("features.k_taps must be in [1, sweep.num_points]")
        if self.mode not in ("magnitude", "real-imag"):
            out.append("features.mode must be 'magnitude' or 'real-imag'")
        if self.normalize not in ("per-link-max", "none"):
            out.append("features.normalize must be 'per-link-max' or 'none'")
        if self.augment < 1:
            out.append("features.augment must be >= 1")
        return out


@dataclass(frozen=True, eq=False)
class SensingSample:
    features: FeatureVector
    hypothesis: str
    bin_index: int
    grid_index: int | None = None
    position_m: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.hypothesis not in ("null", "target"):
            raise ValueError(f"hypothesis must be 'null' or 'target', got {self.hypothesis!r}")
        has_label = self.grid_index is not None and self.position_m is not None
        if (self.hypothesis == "target") != has_label:
            raise ValueError("target samples carry grid_index and position_m; null samples carry neither")

    @property
    def link_ids(self) -> tuple[int, ...]:
        return self.features.link_ids

    @property
    def is_target(self) -> bool:
        return self.hypothesis == "target"


def sample_seed(seed: int, bin_index: int, hypothesis: str, draw: int = 0) -> int:
    hyp = 1 if hypothesis == "target" else 0
    ss = np.random.SeedSequence([int(seed), int(bin_index), hyp, int(draw)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_sample(
    grid: GridSpec,
    scene_template: Scene,
    cfg: SweepConfig,
    bin_index: int,
    hypothesis: str,
    seed: int,
    features: FeatureOptions = FeatureOptions(),
    target: Target = Target((0.0, 0.0)),
) -> SensingSample:
    """Simulate one measurement of ``bin_index`` under ``hypothesis`` with noise ``seed``."""
    if hypothesis == "target":
        position = grid_to_position(grid, bin_index)
        scene = scene_template.with_target(dataclasses.replace(target, position=position), seed=seed)
        grid_index = bin_index
    else:
        scene = scene_template.with_target(None, seed=seed)
        position = grid_index = None
    cirs = [cir_from_sweep(s) for s in synthesize_scene_sweeps(scene, cfg)]
    fv = features_from_cirs(cirs, features.k_taps, features.mode, features.normalize)
    return SensingSample(fv, hypothesis, bin_index, grid_index, position, seed)


def generate_campaign(
    grid: GridSpec,
    scene_template: Scene,
    cfg: SweepConfig,
    seed: int,
    features: FeatureOptions = FeatureOptions(),
    target: Target = Target((0.0, 0.0)),
) -> list[SensingSample]:
    """One null and one target sample per grid bin (times ``features.augment``).

    Samples are ordered by (bin, hypothesis = null first, draw).  The clutter
    layout of ``scene_template`` is shared by every sample.
    """
    if scene_template.target is not None:
        raise ValueError("scene_template must not contain a target")
    samples = []
    for b in range(grid.size):
        for hypothesis in ("null", "target"):
            for draw in range(features.augment):
                s = sample_seed(seed, b, hypothesis, draw)
                samples.append(make_sample(grid, scene_template, cfg, b, hypothesis, s, features, target))
    return samples


@dataclass(frozen=True)
class SplitSpec:
    train_bins: frozenset[int]
    test_bins: frozenset[int]
    val_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_bins", frozenset(int(b) for b in self.train_bins))
        object.__setattr__(self, "test_bins", frozenset(int(b) for b in self.test_bins))
        if self.train_bins & self.test_bins:
            raise ValueError(f"train and test bins overlap: {sorted(self.train_bins & self.test_bins)[:10]}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")

    @classmethod
    def random(cls, n_bins: int, n_test: int = 125, val_fraction: float = 0.3, seed: int = 0) -> SplitSpec:
        if not 0 < n_test < n_bins:
            raise ValueError(f"n_test must be in (0, {n_bins})")
        perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B1])).permutation(n_bins)
        return cls(frozenset(perm[n_test:].tolist()), frozenset(perm[:n_test].tolist()), val_fraction, seed)

    def val_bins(self) -> frozenset[int]:
        """``floor(val_fraction * |train|)`` bins drawn from the training bins."""
        n_val = math.floor(self.val_fraction * len(self.train_bins))
        ordered = np.array(sorted(self.train_bins), dtype=int)
        rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), 0x7A1]))
        return frozenset(rng.permutation(ordered)[:n_val].tolist())


@dataclass(frozen=True, eq=False)
class Splits:
    train: list[SensingSample]
    val: list[SensingSample]
    test: list[SensingSample]
    train_bins: frozenset[int]
    val_bins: frozenset[int]
    test_bins: frozenset[int]


def split_campaign(samples: Sequence[SensingSample], spec: SplitSpec) -> Splits:
    """Partition samples by grid bin; a bin's null and target samples never separate."""
    val_bins = spec.val_bins()
    fit_bins = spec.train_bins - val_bins
    train, val, test = [], [], []
    for s in samples:
        if s.bin_index in val_bins:
            val.append(s)
        elif s.bin_index in fit_bins:
            train.append(s)
        elif s.bin_index in spec.test_bins:
            test.append(s)
        else:
            raise ValueError(f"sample bin {s.bin_index} belongs to neither train nor test bins")
    return Splits(train, val, test, frozenset(fit_bins), val_bins, spec.test_bins)


def stack_features(samples: Sequence[SensingSample], link_ids: Sequence[int] | None = None) -> np.ndarray:
    """``(n, channels, k_taps)`` array, optionally restricted to ``link_ids``."""
    if not samples:
        raise ValueError("no samples to stack")
    if link_ids is None:
        return np.stack([s.features.values for s in samples])
    return np.stack([s.features.select_links(link_ids).values for s in samples])


def hypothesis_labels(samples: Sequence[SensingSample]) -> np.ndarray:
    return np.array([1.0 if s.is_target else 0.0 for s in samples])


def target_positions(samples: Sequence[SensingSample]) -> np.ndarray:
    return np.array([s.position_m for s in samples], dtype=float).reshape(-1, 2)


# -- persistence ---------------------------------------------------------------------------


def save_dataset(samples: Sequence[SensingSample], path, metadata: dict | None = None) -> None:
    layout = None
    if samples:
        f0 = samples[0].features
        layout = {"channels_per_link": f0.channels_per_link, "mode": f0.mode, "normalize": f0.normalize}
    header = dict(metadata or {})
    header.update({"format": "cirsense-dataset", "n_samples": len(samples), "feature_layout": layout})

    chunks = []
    for s in samples:
        fv = s.features
        if layout and (fv.channels_per_link, fv.mode, fv.normalize) != (
            layout["channels_per_link"], layout["mode"], layout["normalize"]
        ):
            raise ValueError("all samples must share one feature layout")
        values = np.ascontiguousarray(fv.values, dtype="<f8")
        x, y = s.position_m if s.position_m is not None else (math.nan, math.nan)
        chunks.append(
            _RECORD.pack(
                1 if s.is_target else 0,
                s.bin_index,
                -1 if s.grid_index is None else s.grid_index,
                x,
                y,
                s.seed,
                len(fv.link_ids),
                values.shape[0],
                values.shape[1],
            )
        )
        chunks.append(struct.pack(f"<{len(fv.link_ids)}H", *fv.link_ids))
        chunks.append(values.tobytes())
    _container.write(path, DATASET_MAGIC, DATASET_VERSION, header, b"".join(chunks))


def load_dataset(path, with_header: bool = False):
    header, payload = _container.read(path, DATASET_MAGIC, DATASET_VERSION)
    layout = header.get("feature_layout")
    samples = []
    offset = 0
    try:
        for _ in range(int(header["n_samples"])):
            hyp, b, g, x, y, seed, n_links, n_rows, k = _RECORD.unpack_from(payload, offset)
            offset += _RECORD.size
            links = struct.unpack_from(f"<{n_links}H", payload, offset)
            offset += 2 * n_links
            n_values = n_rows * k
            values = np.frombuffer(payload, dtype="<f8", count=n_values, offset=offset).reshape(n_rows, k)
            offset += 8 * n_values
            fv = FeatureVector(
                values.astype(float), tuple(links), layout["channels_per_link"], layout["mode"], layout["normalize"]
            )
            if hyp == 1:
                samples.append(SensingSample(fv, "target", b, g, (x, y), seed))
            else:
                samples.append(SensingSample(fv, "null", b, None, None, seed))
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed dataset records: {exc}") from exc
    if offset != len(payload):
        raise FormatError("trailing bytes after the last dataset record")
    return (samples, header) if with_header else samples


def campaign_metadata(grid: GridSpec, scene: Scene, cfg: SweepConfig, features: FeatureOptions, seed: int) -> dict:
    return {
        "grid": dataclasses.asdict(grid),
        "sweep": dataclasses.asdict(cfg),
        "scene": scene_to_dict(scene),
        "features": dataclasses.asdict(features),
        "seed": seed,
    }


def metadata_scene(header: dict) -> Scene:
    return scene_from_dict(header["scene"])


# -- sweep traces --------------------------------------------------------------------------


def export_sweep_trace(sweep: FrequencySweep, path) -> None:
    lines = [f"# link_id={sweep.link_id}", TRACE_COLUMNS]
    for f, x in zip(sweep.cfg.frequencies(), sweep.samples):
        lines.append(f"{float(f)!r},{float(x.real)!r},{float(x.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trace_paths(path) -> list[Path]:
    if isinstance(path, (str, Path)):
        p = Path(path)
        return sorted(p.glob("*.csv")) if p.is_dir() else [p]
    return [Path(p) for p in path]


def import_sweep_traces(path, cfg: SweepConfig) -> list[FrequencySweep]:
    """Parse one trace file per link (a file, a list of files, or a directory of ``*.csv``)."""
    sweeps = []
    for default_link, file in enumerate(_trace_paths(path)):
        link_id = default_link
        freqs, values = [], []
        for row, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "link_id":
                    link_id = int(val)
                continue
            if line.replace(" ", "") == TRACE_COLUMNS:
                continue
            parts = line.split(",")
            try:
                if len(parts) != 3:
                    raise ValueError(f"expected 3 fields, got {len(parts)}")
                f, re_, im = (float(p) for p in parts)
            except ValueError as exc:
                raise FormatError(f"{file}: malformed line {row}: {exc}") from exc
            freqs.append(f)
            values.append(complex(re_, im))
        _check_trace_grid(np.array(freqs), cfg, file)
        sweeps.append(FrequencySweep(np.array(values, dtype=complex), cfg, link_id))
    return sweeps


def _check_trace_grid(freqs: np.ndarray, cfg: SweepConfig, file) -> None:
    if len(freqs) >= 2 and not np.all(np.diff(freqs) > 0):
        raise FormatError(f"{file}: frequencies are not strictly increasing")
    if len(freqs) != cfg.num_points:
        raise FormatError(f"{file}: {len(freqs)} frequency rows, sweep config expects {cfg.num_points}")
    tol = 1e-6 * cfg.frequency_step_hz
    worst = np.max(np.abs(freqs - cfg.frequencies()))
    if worst > tol:
        raise FormatError(f"{file}: frequency grid deviates from the sweep config by {worst:.3g} Hz")


def iter_bins(samples: Iterable[SensingSample]) -> set[int]:
    return {s.bin_index for s in samples}
