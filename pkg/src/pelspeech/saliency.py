"""Occlusion saliency over the input spectrogram and differences between maps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .labelmap import dialect_probs

ProbFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SaliencyConfig:
    patch_mels: int = 8
    patch_frames: int = 50
    stride_mels: int | None = None
    stride_frames: int | None = None
    fill_value: float | str = -1.5  # silence floor of the default frontend, or "median"
    batch_size: int = 64

    def __post_init__(self):
        if isinstance(self.fill_value, str) and self.fill_value != "median":
            raise ValueError(f"unknown fill {self.fill_value!r}")
        for v in (self.patch_mels, self.patch_frames, self.stride[0], self.stride[1]):
            if v < 1:
                raise ValueError("patch and stride sizes must be positive")

    @property
    def stride(self) -> tuple[int, int]:
        return (self.stride_mels or max(1, self.patch_mels // 2),
                self.stride_frames or max(1, self.patch_frames // 2))


@dataclass
class SaliencyMap:
    values: np.ndarray  # normalised to [0, 1] by the max when the max is positive
    raw: np.ndarray
    baseline_prob: float
    target: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def _starts(size: int, patch: int, stride: int) -> list[int]:
    patch = min(patch, size)
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] + patch < size:
        starts.append(size - patch)
    return starts


def fill_matrix(mel: np.ndarray, cfg: SaliencyConfig) -> np.ndarray:
    """What a masked cell is replaced with.

    ``"median"`` uses each mel bin's median over time, i.e. the background
    level of that band in this clip.
    """
    if cfg.fill_value == "median":
        return np.repeat(np.median(mel, axis=1, keepdims=True), mel.shape[1], axis=1).astype(mel.dtype)
    return np.full(mel.shape, cfg.fill_value, dtype=mel.dtype)


def patch_positions(shape: tuple[int, int], cfg: SaliencyConfig) -> list[tuple[int, int, int, int]]:
    """(mel0, mel1, frame0, frame1) for every patch; together they cover the input."""
    sm, sf = cfg.stride
    pm, pf = min(cfg.patch_mels, shape[0]), min(cfg.patch_frames, shape[1])
    return [(m, m + pm, f, f + pf)
            for m in _starts(shape[0], pm, sm)
            for f in _starts(shape[1], pf, sf)]


def normalize_map(values: np.ndarray) -> np.ndarray:
    top = values.max()
    return values / top if top > 0 else values.copy()


def occlusion_map(prob_fn: ProbFn, mel: np.ndarray, cfg: SaliencyConfig = SaliencyConfig(),
                  order: np.ndarray | None = None) -> SaliencyMap:
    """Importance of every cell as the mean predicted-class probability drop
    over the patches that cover it (negative drops count as zero).

    ``prob_fn`` maps a batch (B, mel_bins, frames) to class probabilities.
    ``order`` permutes the evaluation order of patches; the result does not
    depend on it.
    """
    mel = np.asarray(mel)
    base = prob_fn(mel[None])[0]
    target = int(np.argmax(base))
    base_p = float(base[target])
    positions = patch_positions(mel.shape, cfg)
    idx = np.arange(len(positions)) if order is None else np.asarray(order)
    fill = fill_matrix(mel, cfg)
    drops = np.zeros(len(positions))
    for s in range(0, len(idx), cfg.batch_size):
        chunk = idx[s:s + cfg.batch_size]
        batch = np.repeat(mel[None], len(chunk), axis=0)
        for row, i in enumerate(chunk):
            m0, m1, f0, f1 = positions[i]
            batch[row, m0:m1, f0:f1] = fill[m0:m1, f0:f1]
        drops[chunk] = np.maximum(0.0, base_p - prob_fn(batch)[:, target])

    total = np.zeros(mel.shape, dtype=np.float64)
    cover = np.zeros(mel.shape, dtype=np.float64)
    for (m0, m1, f0, f1), d in zip(positions, drops):
        total[m0:m1, f0:f1] += d
        cover[m0:m1, f0:f1] += 1.0
    raw = total / cover
    return SaliencyMap(normalize_map(raw), raw, base_p, target)


def model_prob_fn(model, head, batch_size: int = 64) -> ProbFn:
    """Dialect probabilities of a model read through its label map."""

    def fn(batch: np.ndarray) -> np.ndarray:
        out = []
        with ad.no_grad():
            for i in range(0, len(batch), batch_size):
                logits = model.first_logits(batch[i:i + batch_size].astype(model.dtype))
                out.append(dialect_probs(logits, head.lmap).data.astype(np.float64))
        return np.concatenate(out)

    return fn


def mask_diff(a: SaliencyMap, b: SaliencyMap) -> np.ndarray:
    """Elementwise difference of two normalised maps."""
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {a.shape} vs {b.shape}")
    return a.values - b.values


def mass_fraction(values: np.ndarray, frames: tuple[int, int]) -> float:
    """Share of total map mass inside the frame band ``[f0, f1)``."""
    total = values.sum()
    if total <= 0:
        return 0.0
    return float(values[:, frames[0]:frames[1]].sum() / total)


def save_csv(path: str | Path, matrix: np.ndarray) -> None:
    np.savetxt(path, matrix, delimiter=",", fmt="%.6g")


def save_pgm(path: str | Path, matrix: np.ndarray, lo: float | None = None, hi: float | None = None) -> None:
    """Binary greyscale PGM (P5), low row index at the bottom like a spectrogram plot."""
    m = np.asarray(matrix, dtype=np.float64)
    lo = m.min() if lo is None else lo
    hi = m.max() if hi is None else hi
    scale = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    pixels = np.round(255 * np.clip(scale, 0, 1)).astype(np.uint8)[::-1]
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)[::-1]
