"""Audio ingestion, the fixed 30 s log-Mel input representation and the
synthetic dialect generator used in place of a real corpus."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

WINDOW_SECONDS = 30.0


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    label: int | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size == 0:
            raise ValueError("clip has no samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    """Frontend geometry.  ``DEFAULT`` reproduces the 80 x 3000 reference input."""

    sample_rate: int = 16000
    fft_size: int = 400
    hop: int = 160
    mel_bins: int = 80
    log_floor: float = 1e-10
    seconds: float = WINDOW_SECONDS

    def __post_init__(self):
        if self.hop > self.fft_size:
            raise ValueError("hop must not exceed fft_size")
        if self.mel_bins < 1:
            raise ValueError("mel_bins must be >= 1")

    @property
    def target_frames(self) -> int:
        return int(round(self.seconds * self.sample_rate / self.hop))

    @property
    def window_samples(self) -> int:
        return int(round(self.seconds * self.sample_rate))

    @property
    def silence_value(self) -> float:
        """Normalised value of an all-zero input (the clamped floor)."""
        return (math.log10(self.log_floor) + 4.0) / 4.0


# Reduced geometry for the desk-scale experiments: 16 mels x 150 frames.
DESK = SpectrogramConfig(sample_rate=2000, fft_size=512, hop=400, mel_bins=16)


_F_SP = 200.0 / 3.0
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    lin = f / _F_SP
    log = _MIN_LOG_MEL + np.log(np.maximum(f, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(f >= _MIN_LOG_HZ, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = m * _F_SP
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL))
    return np.where(m >= _MIN_LOG_MEL, log, lin)


def mel_centers(cfg: SpectrogramConfig) -> np.ndarray:
    """Centre frequency (Hz) of every mel filter."""
    pts = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0), cfg.mel_bins + 2))
    return pts[1:-1]


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """Peak-normalised triangular filters, shape (mel_bins, fft//2+1)."""
    pts = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0), cfg.mel_bins + 2))
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / cfg.sample_rate)
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rise = (freqs[None, :] - lo) / (mid - lo)
    fall = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rise, fall))


def fit_window(samples: np.ndarray, cfg: SpectrogramConfig) -> np.ndarray:
    """Truncate to the first window or zero-pad up to it."""
    n = cfg.window_samples
    if samples.size >= n:
        return samples[:n]
    return np.pad(samples, (0, n - samples.size))


def log_mel_power(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """``log10`` mel power clamped at ``log_floor``, before normalisation."""
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"clip sample rate {clip.sample_rate} Hz does not match frontend {cfg.sample_rate} Hz"
        )
    x = fit_window(clip.samples.astype(np.float64), cfg)
    half = cfg.fft_size // 2
    x = np.pad(x, (half, half))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size)[:: cfg.hop]
    frames = frames[: cfg.target_frames]
    window = np.hanning(cfg.fft_size + 1)[:-1]
    power = np.abs(np.fft.rfft(frames * window, axis=-1)) ** 2
    mel = mel_filterbank(cfg) @ power.T
    return np.log10(np.maximum(mel, cfg.log_floor))


def normalize_log_mel(logspec: np.ndarray) -> np.ndarray:
    """Clamp to ``max - 8`` decades and map to roughly [-1, 1] via ``(x + 4) / 4``."""
    logspec = np.maximum(logspec, logspec.max() - 8.0)
    return (logspec + 4.0) / 4.0


def log_mel(clip: AudioClip, cfg: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """Normalised log-Mel spectrogram, always ``(mel_bins, target_frames)`` float32."""
    return normalize_log_mel(log_mel_power(clip, cfg)).astype(np.float32)


def sample_window(clip: AudioClip, seconds: float, rng: np.random.Generator) -> AudioClip:
    """Uniformly placed contiguous window; short clips pass through whole."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    n = int(round(seconds * clip.sample_rate))
    if clip.samples.size <= n:
        return clip
    start = int(rng.integers(0, clip.samples.size - n + 1))
    return AudioClip(clip.samples[start:start + n], clip.sample_rate, clip.label)


# -- synthetic dialects --------------------------------------------------------------


@dataclass
class SynthConfig:
    """Class-conditional tone-band generator.

    ``layout="bands"``: class ``c`` owns ``bands_per_class`` tones from an
    evenly spaced grid between ``f_lo`` and ``f_hi``; they sound together
    inside the active interval while random distractor tones come and go.

    ``layout="pairs"``: every class shares one inventory of ``2 * n_classes /
    2`` tones and is defined by which *pair* of them sounds together inside
    the active interval.  The remaining inventory tones play alone in other
    parts of the clip for the same duration, so the total energy per tone is
    identical across classes and only co-occurrence separates them.

    The active interval is ``active`` when given, otherwise ``active_seconds``
    long at a random position.
    """

    n_classes: int = 4
    sample_rate: int = 2000
    layout: str = "bands"
    bands_per_class: int = 2
    f_lo: float = 120.0
    f_hi: float = 880.0
    jitter: float = 0.01
    band_amplitude: float = 0.2
    noise_level: float = 0.1
    distractors: int = 2
    active: tuple[float, float] | None = None
    active_seconds: float = 12.0

    def __post_init__(self):
        if self.layout not in ("bands", "pairs"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "pairs" and self.n_classes > len(_pair_table(self.inventory_size)):
            raise ValueError("too many classes for the pair inventory")

    @property
    def inventory_size(self) -> int:
        # 4 tones give the 4 balanced pairs {01, 23, 02, 13}
        return max(4, int(math.ceil((1 + math.sqrt(1 + 8 * self.n_classes)) / 2)))

    def band_grid(self) -> np.ndarray:
        k = self.inventory_size if self.layout == "pairs" else self.n_classes * self.bands_per_class
        return np.linspace(self.f_lo, self.f_hi, k)

    def class_tones(self, class_id: int) -> tuple[int, ...]:
        """Grid indices of the tones that form the class signature."""
        if not 0 <= class_id < self.n_classes:
            raise ValueError(f"class_id {class_id} outside [0, {self.n_classes})")
        if self.layout == "pairs":
            return _pair_table(self.inventory_size)[class_id]
        # interleave so that each class spans the whole band range
        return tuple(range(class_id, self.n_classes * self.bands_per_class, self.n_classes))

    def class_bands(self, class_id: int) -> np.ndarray:
        return self.band_grid()[list(self.class_tones(class_id))]


def _pair_table(k: int) -> list[tuple[int, int]]:
    """Tone pairs ordered so that any prefix of even length uses each tone equally."""
    pairs: list[tuple[int, int]] = []
    for step in range(1, k):
        for i in range(k):
            j = (i + step) % k
            p = (min(i, j), max(i, j))
            if p not in pairs:
                pairs.append(p)
    if k == 4:
        pairs = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2)]
    return pairs


def active_interval(duration: float, rng: np.random.Generator, cfg: SynthConfig) -> tuple[float, float]:
    if cfg.active is not None:
        return cfg.active
    span = min(cfg.active_seconds, duration)
    start = float(rng.uniform(0.0, duration - span))
    return start, start + span


def _tone(t, f, cfg, rng, mask):
    f = f * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0))
    amp = cfg.band_amplitude * rng.uniform(0.7, 1.3)
    return mask * amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))


def synth_dialect(class_id: int, duration: float, rng: np.random.Generator,
                  cfg: SynthConfig = SynthConfig()) -> AudioClip:
    """Emit one synthetic clip of class ``class_id``."""
    sr = cfg.sample_rate
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    x = cfg.noise_level * rng.standard_normal(n)
    start, stop = active_interval(duration, rng, cfg)
    gate = ((t >= start) & (t < stop)).astype(np.float64)
    grid = cfg.band_grid()
    signature = cfg.class_tones(class_id)

    for k in signature:
        x += _tone(t, grid[k], cfg, rng, gate)

    if cfg.layout == "pairs":
        # the other tones play solo, one after another, in the time left over
        others = [k for k in range(len(grid)) if k not in signature]
        others = [others[i] for i in rng.permutation(len(others))]
        free = [(0.0, start), (stop, duration)]
        share = (duration - (stop - start)) / max(1, len(others))
        for j, k in enumerate(others):
            x += _tone(t, grid[k], cfg, rng, _free_mask(t, free, j * share, (j + 1) * share))
    for _ in range(cfg.distractors):
        f = rng.uniform(cfg.f_lo, cfg.f_hi)
        d0 = rng.uniform(0.0, duration)
        d1 = min(duration, d0 + rng.uniform(1.0, 5.0))
        x += _tone(t, f, cfg, rng, ((t >= d0) & (t < d1)).astype(np.float64))

    x = np.clip(x, -1.0, 1.0)
    return AudioClip(x.astype(np.float32), sr, class_id)


def _free_mask(t: np.ndarray, free: list[tuple[float, float]], v0: float, v1: float) -> np.ndarray:
    """Mask of the times whose position along the concatenated free regions is in [v0, v1)."""
    mask = np.zeros(t.shape)
    offset = 0.0
    for a, b in free:
        within = (t >= a) & (t < b)
        pos = offset + (t - a)
        mask += within & (pos >= v0) & (pos < v1)
        offset += b - a
    return mask


def band_energy_classifier(clip: AudioClip, cfg: SynthConfig, window: float = 0.5) -> int:
    """Oracle over the known band layout.

    Scores each class by the energy in its signature bands.  For the pair
    layout the score is how long both tones of the pair sound together: the
    number of ``window``-second frames where each exceeds a quarter of the
    loudest tone frame (ties broken by the summed co-occurring energy).
    """
    sr = clip.sample_rate
    grid = cfg.band_grid()
    if cfg.layout == "bands":
        segs = [clip.samples.astype(np.float64)]
    else:
        w = int(window * sr)
        usable = clip.samples.size // w * w
        segs = list(clip.samples[:usable].astype(np.float64).reshape(-1, w))
    energy = []
    for seg in segs:
        spec = np.abs(np.fft.rfft(seg)) ** 2
        freqs = np.fft.rfftfreq(seg.size, 1.0 / sr)
        energy.append([spec[np.abs(freqs - f) <= cfg.jitter * f + 2.0].sum() for f in grid])
    energy = np.array(energy)
    scores = []
    for c in range(cfg.n_classes):
        tones = list(cfg.class_tones(c))
        if cfg.layout == "bands":
            scores.append((energy[0, tones].sum(), 0.0))
        else:
            both = energy[:, tones].min(axis=1)
            scores.append((int((both > 0.25 * energy.max()).sum()), float(both.sum())))
    return max(range(cfg.n_classes), key=lambda c: scores[c])


# -- WAV + manifests ---------------------------------------------------------------------


def read_wav(path: str | Path) -> AudioClip:
    """Read mono PCM WAV stored as 16-bit integers or 32-bit floats."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a RIFF/WAVE file")
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    else:
        raise ValueError(f"{path}: unsupported sample encoding {data.dtype} (need int16 or float32)")
    return AudioClip(samples, int(sr))


def write_wav(path: str | Path, clip: AudioClip, encoding: str = "int16") -> None:
    if encoding == "int16":
        data = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = clip.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    wavfile.write(path, clip.sample_rate, data)


@dataclass
class ManifestEntry:
    path: str
    class_id: int
    duration: float


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: str = "."

    def by_class(self) -> dict[int, list[ManifestEntry]]:
        out: dict[int, list[ManifestEntry]] = {}
        for e in self.entries:
            out.setdefault(e.class_id, []).append(e)
        return dict(sorted(out.items()))

    def save(self, path: str | Path) -> None:
        payload = {"entries": [asdict(e) for e in self.entries]}
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Manifest:
        path = Path(path)
        payload = json.loads(path.read_text())
        entries = [ManifestEntry(**e) for e in payload["entries"]]
        return cls(entries, str(path.parent))

    def resolve(self, entry: ManifestEntry) -> Path:
        return Path(self.root) / entry.path


def write_synthetic_dataset(out_dir: str | Path, per_class: int, rng: np.random.Generator,
                            cfg: SynthConfig = SynthConfig(), duration: float = WINDOW_SECONDS,
                            split: str = "train") -> Manifest:
    """Write ``per_class`` clips per class as WAV files plus ``manifest.json``."""
    out = Path(out_dir)
    (out / split).mkdir(parents=True, exist_ok=True)
    manifest = Manifest(root=str(out))
    for c in range(cfg.n_classes):
        for i in range(per_class):
            clip = synth_dialect(c, duration, rng, cfg)
            rel = f"{split}/c{c:02d}_{i:05d}.wav"
            write_wav(out / rel, clip)
            manifest.entries.append(ManifestEntry(rel, c, clip.duration))
    manifest.save(out / f"{split}_manifest.json")
    return manifest
