"""Run configuration files and the single-file checkpoint format.

A checkpoint is::

    PELCKPT <version> <manifest bytes>\\n
    <manifest: JSON, sorted keys>\\n
    <blob: little-endian float32 parameters, concatenated in name order>

The manifest lists every parameter as ``{name, shape, dtype, offset}``
sorted by name with contiguous offsets.  Loading validates the layout
before touching the blob and raises a distinct :class:`CheckpointError`
subclass for each way a file can be broken.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .audio import DESK, SpectrogramConfig
from .autodiff import ParamRegistry
from .labelmap import LabelMap
from .model import ModelConfig, TransformerModel
from .pel import AdapterConfig
from .train import Head, HeadConfig, TrainConfig, fingerprint

FORMAT_VERSION = 1
MAGIC = b"PELCKPT"
BLOB_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    """Base class for unreadable checkpoints."""


class CheckpointFormatError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedBlobError(CheckpointError):
    pass


class OffsetConsistencyError(CheckpointError):
    pass


class ConfigError(ValueError):
    pass


# -- run configuration ------------------------------------------------------------------


def _strict(cls, d: Any, where: str):
    """Build dataclass ``cls`` from a dict, rejecting keys it does not declare."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return d


@dataclass
class DataPaths:
    train: str | None = None
    dev: str | None = None
    test: str | None = None


@dataclass
class RunConfig:
    """Everything a CLI run needs; ``seed`` is the root of all randomness.

    ``backbone`` is ``"random"`` (fresh init), ``"pretrained"`` (the desk
    pretraining stage) or a checkpoint path.  ``label_map`` pins explicit
    token groups for the ``map`` head instead of drawing them from the seed.
    Relative paths resolve against the directory of the config file.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    spectrogram: SpectrogramConfig = DESK
    train: TrainConfig = field(default_factory=TrainConfig)
    label_map: LabelMap | None = None
    data: DataPaths = field(default_factory=DataPaths)
    output_dir: str = "runs/default"
    backbone: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.train.seed != self.seed:
            self.train = TrainConfig(**{**self.train.__dict__, "seed": self.seed})

    def to_dict(self) -> dict:
        t = self.train.to_dict()
        t.pop("seed")
        return {
            "model": self.model.to_dict(),
            "spectrogram": asdict(self.spectrogram),
            "train": t,
            "label_map": None if self.label_map is None else self.label_map.to_dict(),
            "data": asdict(self.data),
            "output_dir": self.output_dir,
            "backbone": self.backbone,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        _strict(cls, d, "config")
        kw: dict[str, Any] = {}
        try:
            if "model" in d:
                kw["model"] = ModelConfig(**_strict(ModelConfig, d["model"], "model"))
            if "spectrogram" in d:
                kw["spectrogram"] = SpectrogramConfig(**_strict(SpectrogramConfig, d["spectrogram"], "spectrogram"))
            if "train" in d:
                t = dict(_strict(TrainConfig, d["train"], "train"))
                if t.get("adapter") is not None:
                    _strict(AdapterConfig, t["adapter"], "train.adapter")
                if "head" in t:
                    _strict(HeadConfig, t["head"], "train.head")
                t.setdefault("seed", d.get("seed", 0))
                kw["train"] = TrainConfig.from_dict(t)
            if d.get("label_map") is not None:
                kw["label_map"] = LabelMap.from_dict(d["label_map"])
            if "data" in d:
                kw["data"] = DataPaths(**_strict(DataPaths, d["data"], "data"))
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"config: {exc}") from exc
        for key in ("output_dir", "backbone", "seed"):
            if key in d:
                kw[key] = d[key]
        if not isinstance(kw.get("seed", 0), int):
            raise ConfigError("config: seed must be an integer")
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


# -- checkpoints ----------------------------------------------------------------------


def _descriptors(registry: ParamRegistry) -> list[dict]:
    out, offset = [], 0
    for name in sorted(registry.names()):
        shape = list(registry[name].shape)
        nbytes = int(np.prod(shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
        out.append({"name": name, "shape": shape, "dtype": BLOB_DTYPE.str, "offset": offset})
        offset += nbytes
    return out


def save_checkpoint(registry: ParamRegistry, metadata: dict, path: str | Path) -> None:
    """Write ``registry`` plus flags and ``metadata``; identical inputs give identical bytes."""
    descs = _descriptors(registry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "params": descs,
        "trainable": {d["name"]: registry.is_trainable(d["name"]) for d in descs},
        **metadata,
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    blob = b"".join(np.ascontiguousarray(registry[d["name"]].data, dtype=BLOB_DTYPE).tobytes() for d in descs)
    with open(path, "wb") as fh:
        fh.write(MAGIC + f" {FORMAT_VERSION} {len(body)}\n".encode())
        fh.write(body + b"\n")
        fh.write(blob)


def _parse(raw: bytes) -> tuple[dict, bytes]:
    nl = raw.find(b"\n")
    header = raw[:nl].split() if nl > 0 else []
    if len(header) != 3 or header[0] != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic line)")
    try:
        version, length = int(header[1]), int(header[2])
    except ValueError as exc:
        raise CheckpointFormatError("malformed checkpoint header") from exc
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    start = nl + 1
    body = raw[start:start + length]
    if len(body) < length or raw[start + length:start + length + 1] != b"\n":
        raise TruncatedBlobError("checkpoint ends inside the manifest")
    try:
        manifest = json.loads(body)
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format_version") != version:
        raise VersionMismatchError(f"manifest format_version {manifest.get('format_version')} "
                                   f"disagrees with header {version}")
    return manifest, raw[start + length + 1:]


def _check_layout(descs: list[dict], blob_size: int) -> None:
    names = [d["name"] for d in descs]
    if names != sorted(names) or len(set(names)) != len(names):
        raise OffsetConsistencyError("parameter descriptors are not sorted by unique name")
    expected = 0
    for d in descs:
        if d.get("dtype") != BLOB_DTYPE.str:
            raise OffsetConsistencyError(f"{d['name']}: unsupported dtype {d.get('dtype')!r}")
        if any((not isinstance(s, int)) or s < 0 for s in d["shape"]):
            raise OffsetConsistencyError(f"{d['name']}: bad shape {d['shape']}")
        if d["offset"] != expected:
            raise OffsetConsistencyError(f"{d['name']}: offset {d['offset']}, expected {expected} "
                                         "from the preceding shapes")
        expected += int(np.prod(d["shape"], dtype=np.int64)) * BLOB_DTYPE.itemsize
    if blob_size < expected:
        raise TruncatedBlobError(f"blob has {blob_size} bytes, manifest needs {expected}")
    if blob_size > expected:
        raise OffsetConsistencyError(f"blob has {blob_size - expected} bytes beyond the last parameter")


def load_checkpoint(path: str | Path) -> tuple[ParamRegistry, dict]:
    manifest, blob = _parse(Path(path).read_bytes())
    descs = manifest.get("params")
    if not isinstance(descs, list):
        raise CheckpointFormatError("manifest has no parameter list")
    _check_layout(descs, len(blob))
    flags = manifest.get("trainable", {})
    if set(flags) != {d["name"] for d in descs}:
        raise CheckpointFormatError("trainable flags do not match the parameter list")
    registry = ParamRegistry()
    for d in descs:
        count = int(np.prod(d["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=BLOB_DTYPE, count=count, offset=d["offset"])
        registry.add(d["name"], arr.astype(np.float32).reshape(d["shape"]), trainable=bool(flags[d["name"]]))
    return registry, manifest


def save_model(model: TransformerModel, path: str | Path, head: Head | None = None,
               spectrogram: SpectrogramConfig = DESK, provenance: dict | None = None) -> None:
    meta = {
        "model_config": model.config.to_dict(),
        "spectrogram": asdict(spectrogram),
        "head": None if head is None else {"mode": head.mode, "label_map": head.lmap.to_dict()},
        "provenance": provenance or {},
    }
    save_checkpoint(model.registry, meta, path)


def load_model(path: str | Path) -> tuple[TransformerModel, Head | None, dict]:
    registry, manifest = load_checkpoint(path)
    try:
        config = ModelConfig(**manifest["model_config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"manifest model_config unusable: {exc}") from exc
    head = None
    if manifest.get("head"):
        head = Head(manifest["head"]["mode"], LabelMap.from_dict(manifest["head"]["label_map"]))
    return TransformerModel(config, registry), head, manifest


def spectrogram_of(manifest: dict) -> SpectrogramConfig:
    return SpectrogramConfig(**manifest["spectrogram"]) if "spectrogram" in manifest else DESK
