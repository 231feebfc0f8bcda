"""Multistatic scatter-point channel model and frequency-sweep synthesis.

A scene holds one transmitter, several receivers, static clutter scatterers
and optionally a human target.  Every Tx->Rx link is described by a set of
single-bounce propagation paths; a swept channel measurement is the sum of
the path phasors over the swept frequency grid plus complex Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Nodes closer than this are treated as co-located.
_MIN_SEPARATION_M = 1e-9

Point = tuple[float, float]


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``problems`` lists every violated invariant, not only the first one.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    center_frequency_hz: float = 28e9
    bandwidth_hz: float = 1e9
    num_points: int = 1001
    noise_std: float = 0.02
    calibration_delay_s: float = 0.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if int(self.num_points) != self.num_points or self.num_points < 2:
            out.append("sweep.num_points must be an integer >= 2")
        if not self.bandwidth_hz > 0:
            out.append("sweep.bandwidth_hz must be > 0")
        if not self.center_frequency_hz > self.bandwidth_hz / 2:
            out.append("sweep.center_frequency_hz must exceed bandwidth_hz / 2")
        if not self.noise_std >= 0:
            out.append("sweep.noise_std must be >= 0")
        if not math.isfinite(self.calibration_delay_s):
            out.append("sweep.calibration_delay_s must be finite")
        return out

    @property
    def frequency_step_hz(self) -> float:
        return self.bandwidth_hz / (self.num_points - 1)

    def frequencies(self) -> np.ndarray:
        """Inclusive, symmetric sweep grid ``Fc - B/2 + i*B/(N-1)``."""
        i = np.arange(self.num_points, dtype=float)
        # i*B is exact, so each frequency carries a single rounding
        return self.center_frequency_hz - self.bandwidth_hz / 2 + i * self.bandwidth_hz / (self.num_points - 1)


@dataclass(frozen=True, eq=False)
class FrequencySweep:
    """Complex samples of one Tx->Rx link over the swept grid of ``cfg``."""

    samples: np.ndarray
    cfg: SweepConfig
    link_id: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != (self.cfg.num_points,):
            raise ValueError(f"sweep has {samples.shape} samples, config expects ({self.cfg.num_points},)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("sweep samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class PropagationPath:
    gain: complex
    delay_s: float
    doppler_hz: float = 0.0

    def __post_init__(self):
        if not self.delay_s >= 0:
            raise ValueError(f"path delay must be >= 0, got {self.delay_s}")
        if not np.isfinite(abs(self.gain)):
            raise ValueError("path gain must be finite")


@dataclass(frozen=True)
class ClutterPoint:
    position: Point
    reflectivity: float


@dataclass(frozen=True)
class Target:
    position: Point
    body_radius_m: float = 0.25
    reflectivity: float = 0.5
    blockage_db: float = 20.0


@dataclass(frozen=True)
class Scene:
    tx_position: Point
    rx_positions: tuple[Point, ...]
    clutter_points: tuple[ClutterPoint, ...] = ()
    target: Target | None = None
    seed: int = 0
    rx_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "tx_position", _as_point(self.tx_position))
        object.__setattr__(self, "rx_positions", tuple(_as_point(p) for p in self.rx_positions))
        object.__setattr__(self, "clutter_points", tuple(self.clutter_points))
        if not self.rx_ids:
            # Receivers are numbered after the transmitter, as in Tx1 / Rx2..Rx4.
            object.__setattr__(self, "rx_ids", tuple(range(2, 2 + len(self.rx_positions))))
        else:
            object.__setattr__(self, "rx_ids", tuple(int(i) for i in self.rx_ids))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if not self.rx_positions:
            out.append("scene.rx_positions must be non-empty")
        if len(self.rx_ids) != len(self.rx_positions):
            out.append("scene.rx_ids must name every receiver")
        elif len(set(self.rx_ids)) != len(self.rx_ids):
            out.append("scene.rx_ids must be unique")
        if any(c.reflectivity < 0 for c in self.clutter_points):
            out.append("scene clutter reflectivities must be >= 0")
        if self.target is not None:
            if not self.target.body_radius_m > 0:
                out.append("scene.target.body_radius_m must be > 0")
            if self.target.reflectivity < 0:
                out.append("scene.target.reflectivity must be >= 0")
        return out

    def with_target(self, target: Target | None, seed: int | None = None) -> Scene:
        return replace(self, target=target, seed=self.seed if seed is None else seed)


def _as_point(p) -> Point:
    x, y = p
    return (float(x), float(y))


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _segment_distance(p: Point, a: Point, b: Point) -> float:
    """Shortest distance from point ``p`` to the segment ``a``-``b``."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    length2 = dx * dx + dy * dy
    t = 0.0 if length2 == 0 else ((p[0] - ax) * dx + (p[1] - ay) * dy) / length2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def _check_separation(a: Point, b: Point, what: str):
    if _distance(a, b) < _MIN_SEPARATION_M:
        raise GeometryError(f"co-located nodes: {what} at {a}")


def build_paths(scene: Scene, link_index: int) -> list[PropagationPath]:
    """Deterministic single-bounce path set for the link Tx -> Rx[link_index].

    The returned list holds the line-of-sight path first, then one path per
    clutter point in scene order, then the target bounce (if a target is
    present).  Paths whose segments pass within the target's body radius are
    attenuated by ``blockage_db``.
    """
    if not 0 <= link_index < len(scene.rx_positions):
        raise IndexError(f"link_index {link_index} out of range for {len(scene.rx_positions)} receivers")
    tx = scene.tx_position
    rx = scene.rx_positions[link_index]
    nodes = [("tx", tx)] + [(f"rx{i}", p) for i, p in zip(scene.rx_ids, scene.rx_positions)]
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            _check_separation(nodes[i][1], nodes[j][1], f"{nodes[i][0]}/{nodes[j][0]}")

    target = scene.target
    if target is not None:
        blockage = 10.0 ** (-target.blockage_db / 20.0)

    def blocked(*segments: tuple[Point, Point]) -> bool:
        return target is not None and any(
            _segment_distance(target.position, a, b) <= target.body_radius_m for a, b in segments
        )

    paths = []
    los = _distance(tx, rx)
    gain = 1.0 / los
    if blocked((tx, rx)):
        gain *= blockage
    paths.append(PropagationPath(complex(gain), los / SPEED_OF_LIGHT))

    for c in scene.clutter_points:
        _check_separation(c.position, tx, "clutter/tx")
        _check_separation(c.position, rx, "clutter/rx")
        d1, d2 = _distance(tx, c.position), _distance(c.position, rx)
        gain = c.reflectivity / (d1 * d2)
        if blocked((tx, c.position), (c.position, rx)):
            gain *= blockage
        paths.append(PropagationPath(complex(gain), (d1 + d2) / SPEED_OF_LIGHT))

    if target is not None:
        _check_separation(target.position, tx, "target/tx")
        _check_separation(target.position, rx, "target/rx")
        d1, d2 = _distance(tx, target.position), _distance(target.position, rx)
        paths.append(PropagationPath(complex(target.reflectivity / (d1 * d2)), (d1 + d2) / SPEED_OF_LIGHT))
    return paths


def synthesize_sweep(
    paths: Sequence[PropagationPath], cfg: SweepConfig, rng_seed: int, link_id: int = 0
) -> FrequencySweep:
    """Complex swept response ``X_i = sum_l a_l exp(-j 2 pi (f_i + d_l) tau_l) + w_i``.

    The calibration delay is added to every path delay.  ``w_i`` is
    circularly-symmetric Gaussian with total variance ``noise_std**2``.
    """
    if len(paths) == 0:
        raise ValueError("at least one propagation path is required")
    f = cfg.frequencies()
    gain = np.array([p.gain for p in paths], dtype=complex)
    tau = np.array([p.delay_s for p in paths], dtype=float) + cfg.calibration_delay_s
    doppler = np.array([p.doppler_hz for p in paths], dtype=float)
    phase = -2j * np.pi * (f[:, None] + doppler[None, :]) * tau[None, :]
    x = (gain[None, :] * np.exp(phase)).sum(axis=1)
    if cfg.noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        scale = cfg.noise_std / math.sqrt(2.0)
        x = x + scale * (rng.standard_normal(cfg.num_points) + 1j * rng.standard_normal(cfg.num_points))
    return FrequencySweep(x, cfg, link_id)


def link_seed(scene_seed: int, link_index: int) -> int:
    """Per-link noise seed derived from the scene seed."""
    return int(np.random.SeedSequence([int(scene_seed), int(link_index)]).generate_state(1, np.uint64)[0])


def synthesize_scene_sweeps(scene: Scene, cfg: SweepConfig) -> list[FrequencySweep]:
    """One sweep per receiver, in receiver order."""
    return [
        synthesize_sweep(build_paths(scene, k), cfg, link_seed(scene.seed, k), link_id=scene.rx_ids[k])
        for k in range(len(scene.rx_positions))
    ]


def default_scene(seed: int = 0, n_clutter: int = 16) -> Scene:
    """Lab-like layout around a 4.2 m x 4.4 m floor grid with origin at (0, 0).

    Tx1 sits on the left wall, Rx2 opposite it, Rx3 and Rx4 on the far and
    near walls.  Clutter scatterers (furniture, wall features) are drawn once
    from ``seed`` in the margin between the grid and the room walls so that
    the target can never coincide with them.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC1]))
    room_lo, room_hi = (-1.0, -1.0), (5.2, 5.4)
    grid_lo, grid_hi = (0.0, 0.0), (4.2, 4.4)
    clutter = []
    while len(clutter) < n_clutter:
        x = rng.uniform(room_lo[0], room_hi[0])
        y = rng.uniform(room_lo[1], room_hi[1])
        inside = grid_lo[0] - 0.3 < x < grid_hi[0] + 0.3 and grid_lo[1] - 0.3 < y < grid_hi[1] + 0.3
        if inside:
            continue
        clutter.append(ClutterPoint((round(x, 6), round(y, 6)), round(float(rng.uniform(0.2, 1.0)), 6)))
    return Scene(
        tx_position=(-0.6, 2.2),
        rx_positions=((4.8, 2.2), (2.1, 5.0), (2.1, -0.6)),
        clutter_points=tuple(clutter),
        seed=seed,
    )


def scene_to_dict(scene: Scene) -> dict:
    out = {
        "tx_position": list(scene.tx_position),
        "rx_positions": [list(p) for p in scene.rx_positions],
        "rx_ids": list(scene.rx_ids),
        "clutter_points": [
            {"position": list(c.position), "reflectivity": c.reflectivity} for c in scene.clutter_points
        ],
        "seed": scene.seed,
        "target": None,
    }
    if scene.target is not None:
        t = scene.target
        out["target"] = {
            "position": list(t.position),
            "body_radius_m": t.body_radius_m,
            "reflectivity": t.reflectivity,
            "blockage_db": t.blockage_db,
        }
    return out


def scene_from_dict(d: dict) -> Scene:
    target = d.get("target")
    if target is not None:
        target = Target(
            position=_as_point(target["position"]),
            body_radius_m=float(target.get("body_radius_m", 0.25)),
            reflectivity=float(target.get("reflectivity", 0.5)),
            blockage_db=float(target.get("blockage_db", 20.0)),
        )
    return Scene(
        tx_position=_as_point(d["tx_position"]),
        rx_positions=tuple(_as_point(p) for p in d["rx_positions"]),
        clutter_points=tuple(
            ClutterPoint(_as_point(c["position"]), float(c["reflectivity"])) for c in d.get("clutter_points", ())
        ),
        target=target,
        seed=int(d.get("seed", 0)),
        rx_ids=tuple(d.get("rx_ids", ())),
    )
