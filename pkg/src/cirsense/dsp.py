"""Channel impulse responses from frequency sweeps, and learner features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sim import FrequencySweep

__all__ = [
    "Cir",
    "FeatureVector",
    "FrequencySweep",
    "cir_from_sweep",
    "features_from_cirs",
    "naive_idft",
]

FEATURE_MODES = ("magnitude", "real-imag")
NORMALIZATIONS = ("per-link-max", "none")


@dataclass(frozen=True, eq=False)
class Cir:
    taps: np.ndarray
    bin_spacing_s: float
    link_id: int = 0

    def __len__(self):
        return len(self.taps)

    def delays(self) -> np.ndarray:
        return np.arange(len(self.taps)) * self.bin_spacing_s


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Real-valued learner input of shape ``(n_links * channels_per_link, k_taps)``.

    Rows are grouped by link: rows ``[i*c, (i+1)*c)`` belong to ``link_ids[i]``.
    """

    values: np.ndarray
    link_ids: tuple[int, ...]
    channels_per_link: int
    mode: str = "magnitude"
    normalize: str = "per-link-max"

    @property
    def k_taps(self) -> int:
        return self.values.shape[1]

    @property
    def layout(self) -> dict:
        return {
            "link_ids": list(self.link_ids),
            "channels_per_link": self.channels_per_link,
            "k_taps": self.k_taps,
            "mode": self.mode,
            "normalize": self.normalize,
        }

    def select_links(self, link_ids: Sequence[int]) -> FeatureVector:
        rows = link_rows(self.link_ids, self.channels_per_link, link_ids)
        return FeatureVector(self.values[rows], tuple(link_ids), self.channels_per_link, self.mode, self.normalize)


def link_rows(available: Sequence[int], channels_per_link: int, wanted: Sequence[int]) -> np.ndarray:
    """Row indices of the feature matrix that carry the ``wanted`` links."""
    available = list(available)
    rows = []
    for link in wanted:
        if link not in available:
            raise KeyError(f"link {link} not in feature layout {available}")
        i = available.index(link)
        rows.extend(range(i * channels_per_link, (i + 1) * channels_per_link))
    return np.array(rows, dtype=int)


def cir_from_sweep(sweep: FrequencySweep) -> Cir:
    """Length-N inverse DFT (1/N normalization) of a sweep.

    Tap ``b`` sits at delay ``b / (N * df)`` relative to the phase reference
    of the first swept frequency.
    """
    n = len(sweep.samples)
    taps = np.fft.ifft(sweep.samples)
    return Cir(taps, 1.0 / (n * sweep.cfg.frequency_step_hz), sweep.link_id)


def naive_idft(x: np.ndarray) -> np.ndarray:
    """Direct O(N^2) inverse DFT with 1/N normalization."""
    x = np.asarray(x, dtype=complex)
    n = len(x)
    k = np.arange(n)
    kernel = np.exp(2j * np.pi * np.outer(k, k) / n)
    return kernel @ x / n


def features_from_cirs(
    cirs: Sequence[Cir],
    k_taps: int = 256,
    mode: str = "magnitude",
    normalize: str = "per-link-max",
) -> FeatureVector:
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    if normalize not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalize!r}")
    if not cirs:
        raise ValueError("at least one CIR is required")
    n = len(cirs[0])
    if any(len(c) != n for c in cirs):
        raise ValueError("all CIRs must have the same length")
    if not 0 < k_taps <= n:
        raise ValueError(f"k_taps must be in (0, {n}], got {k_taps}")

    rows = []
    for cir in cirs:
        taps = cir.taps[:k_taps]
        block = np.abs(taps)[None, :] if mode == "magnitude" else np.stack([taps.real, taps.imag])
        if normalize == "per-link-max":
            peak = np.abs(taps).max()
            if peak > 0:
                block = block / peak
        rows.append(block)
    values = np.concatenate(rows, axis=0)
    channels = 1 if mode == "magnitude" else 2
    return FeatureVector(values, tuple(c.link_id for c in cirs), channels, mode, normalize)
