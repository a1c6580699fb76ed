"""Training loop, class-balanced epoch plans, accuracy and the utility score."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .audio import (DESK, AudioClip, Manifest, SpectrogramConfig, SynthConfig, log_mel, read_wav,
                    sample_window, synth_dialect)
from .autodiff import OptimizerState, adam_step, linear_lr
from .labelmap import LabelMap, dialect_log_probs, predict_dialect, random_map
from .model import ModelConfig, TransformerModel, extend_vocab
from .pel import (AdapterConfig, ReprogramDelta, ScopeSelector, apply_scope, attach_reprogram,
                  base_param_count, insert_adapters)

log = logging.getLogger(__name__)

LEARNING_RATES = (1e-2, 1e-3, 1e-4)

# samples per class -> share of the full ADI-17 training set
ADI17_FRACTIONS = {500: 2.33, 1000: 4.60, 2000: 8.69, 5000: 18.40, 10000: 30.95}

EVAL_WINDOW_NOTE = "first 30 s window"
EMBED_SCOPE_NOTE = "token embedding is its own scope (embed.*), outside encoder/decoder"


class DivergenceError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


def derive_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for one subsystem, derived from the root seed.

    ``stream`` is hashed (sha256, first 4 bytes) into the SeedSequence spawn key,
    so e.g. ``"model"`` and ``"plan"`` never share draws.
    """
    key = int.from_bytes(hashlib.sha256(stream.encode()).digest()[:4], "little")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def fingerprint(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- configuration --------------------------------------------------------------------


@dataclass
class HeadConfig:
    """How dialects are read off the vocabulary logits.

    ``extend`` appends one new token per dialect and trains with cross-entropy
    over the full vocabulary; ``map`` reuses existing language tokens through a
    random many-to-one label map.
    """

    mode: str = "extend"
    tokens_per_dialect: int = 1

    def __post_init__(self):
        if self.mode not in ("extend", "map"):
            raise ValueError(f"unknown head mode {self.mode!r}")


@dataclass
class TrainConfig:
    base_lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    weight_decay: float = 0.1
    seed: int = 0
    samples_per_class: int = 500
    selector: ScopeSelector = field(default_factory=ScopeSelector)
    adapter: AdapterConfig | None = None
    reprogram: bool = False
    head: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.samples_per_class < 1:
            raise ValueError("epochs, batch_size and samples_per_class must be >= 1")

    def to_dict(self) -> dict:
        return {
            "base_lr": self.base_lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "samples_per_class": self.samples_per_class,
            "selector": str(self.selector),
            "adapter": None if self.adapter is None else self.adapter.to_dict(),
            "reprogram": self.reprogram,
            "head": asdict(self.head),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        d["selector"] = ScopeSelector.parse(d["selector"]) if "selector" in d else ScopeSelector()
        if d.get("adapter") is not None:
            d["adapter"] = AdapterConfig.from_dict(d["adapter"])
        if "head" in d:
            d["head"] = HeadConfig(**d["head"])
        return cls(**d)


# -- data -------------------------------------------------------------------------------


class ClipDataset:
    """In-memory clips with the 30 s featurisation and a feature cache."""

    def __init__(self, clips: Sequence[AudioClip], spec: SpectrogramConfig):
        self.clips = list(clips)
        self.spec = spec
        self.labels = np.array([c.label for c in self.clips], dtype=np.int64)
        self._cache: dict[int, np.ndarray] = {}

    @classmethod
    def from_manifest(cls, manifest: Manifest, spec: SpectrogramConfig) -> ClipDataset:
        clips = []
        for e in manifest.entries:
            clip = read_wav(manifest.resolve(e))
            clip.label = e.class_id
            clips.append(clip)
        return cls(clips, spec)

    def __len__(self) -> int:
        return len(self.clips)

    def by_class(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, y in enumerate(self.labels):
            out.setdefault(int(y), []).append(i)
        return dict(sorted(out.items()))

    def features(self, index: int, window_seed: int | None = None) -> np.ndarray:
        """Log-Mel of one clip; long clips use a seeded random window when training."""
        clip = self.clips[index]
        long_clip = clip.duration > self.spec.seconds
        if window_seed is not None and long_clip:
            return log_mel(sample_window(clip, self.spec.seconds, np.random.default_rng(window_seed)),
                           self.spec)
        if index not in self._cache:
            self._cache[index] = log_mel(clip, self.spec)
        return self._cache[index]

    def eval_features(self) -> np.ndarray:
        """Every clip at its first window (the evaluation convention)."""
        return np.stack([self.features(i) for i in range(len(self))])


@dataclass(frozen=True)
class PlanEntry:
    item: object
    class_id: int
    window_seed: int


def make_epoch_plan(dataset, samples_per_class: int, rng: np.random.Generator) -> list[PlanEntry]:
    """Exactly ``samples_per_class`` entries per class, shuffled.

    Classes with fewer clips than requested are drawn with replacement
    (oversampling); larger classes are subsampled without replacement.  Each
    entry carries its own window seed.
    """
    groups = dataset.by_class()
    for c, items in groups.items():
        if not items:
            raise ValueError(f"class {c} has no clips")
    plan: list[PlanEntry] = []
    for c, items in groups.items():
        replace = len(items) < samples_per_class
        picks = rng.choice(len(items), size=samples_per_class, replace=replace)
        seeds = rng.integers(0, 2**63 - 1, size=samples_per_class)
        plan.extend(PlanEntry(items[int(i)], c, int(s)) for i, s in zip(picks, seeds))
    order = rng.permutation(len(plan))
    return [plan[i] for i in order]


def plan_fraction(samples_per_class: int) -> float | None:
    """Share of ADI-17 that a per-class budget corresponds to, when tabulated."""
    return ADI17_FRACTIONS.get(samples_per_class)


# -- metrics -------------------------------------------------------------------------------


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return 100.0 * float(np.mean(predictions == labels))


def utility_score(test_acc: float, trainable_count: int) -> float:
    """Test accuracy (percent) over the base-10 log of the trainable parameter count."""
    if trainable_count < 2:
        raise ValueError("utility score needs at least 2 trainable parameters")
    return test_acc / math.log10(trainable_count)


def trainable_ratio(trainable_count: int, base_total: int) -> float:
    return 100.0 * trainable_count / base_total


@dataclass
class EvalReport:
    dev_accuracy: float
    test_accuracy: float
    trainable_count: int
    trainable_ratio: float
    utility_score: float | None
    fingerprint: str
    label: str = ""
    base_lr: float | None = None
    plan_fraction: float | None = None
    eval_window: str = EVAL_WINDOW_NOTE
    embed_scope: str = EMBED_SCOPE_NOTE

    CSV_FIELDS = ("label", "dev_accuracy", "test_accuracy", "trainable_count", "trainable_ratio",
                  "utility_score", "base_lr", "plan_fraction", "fingerprint", "eval_window")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, extrasaction="ignore",
                                lineterminator="\n")
        writer.writerow(self.to_dict())
        return buf.getvalue()

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS) + "\n"

    def table_line(self) -> str:
        util = "-" if self.utility_score is None else f"{self.utility_score:.2f}"
        return (f"{self.label or 'run'}: trainable {self.trainable_count} ({self.trainable_ratio:.2f}%), "
                f"dev {self.dev_accuracy:.2f}%, test {self.test_accuracy:.2f}%, utility {util}")


# -- model preparation ------------------------------------------------------------------------


@dataclass
class Head:
    mode: str
    lmap: LabelMap

    def loss(self, logits, labels) -> ad.Tensor:
        if self.mode == "extend":
            targets = np.array([self.lmap.groups[y][0] for y in labels])
            return ad.cross_entropy(logits, targets)
        return ad.nll(dialect_log_probs(logits, self.lmap), labels)

    def predict(self, logits) -> np.ndarray:
        return np.atleast_1d(predict_dialect(logits, self.lmap))


def prepare_model(model: TransformerModel, cfg: TrainConfig, n_classes: int) -> Head:
    """Apply head, adapters, reprogramming delta and scope to ``model`` in place."""
    rng = derive_rng(cfg.seed, "prepare")
    if cfg.head.mode == "extend":
        ids = extend_vocab(model, n_classes * cfg.head.tokens_per_dialect, rng)
        k = cfg.head.tokens_per_dialect
        lmap = LabelMap(tuple(tuple(ids[d * k:(d + 1) * k]) for d in range(n_classes)))
    else:
        lmap = random_map(n_classes, cfg.head.tokens_per_dialect, model.config.language_tokens, rng)
    if cfg.adapter is not None:
        insert_adapters(model, cfg.adapter, rng)
    if cfg.reprogram:
        attach_reprogram(model, ReprogramDelta.zeros(model.config.mel_bins, model.config.max_frames,
                                                     model.dtype))
    apply_scope(model.registry, cfg.selector)
    return Head(cfg.head.mode, lmap)


# -- training ------------------------------------------------------------------------------------


@dataclass
class TrainResult:
    loss_curve: list[float]
    dev_curve: list[float]
    best_dev: float | None
    best_epoch: int | None
    steps: int

    def loss_csv(self) -> str:
        lines = ["epoch,train_loss,dev_accuracy"]
        for i, loss in enumerate(self.loss_curve):
            dev = f"{self.dev_curve[i]:.4f}" if i < len(self.dev_curve) else ""
            lines.append(f"{i},{loss:.6f},{dev}")
        return "\n".join(lines) + "\n"


def predict(model: TransformerModel, head: Head, features: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = []
    with ad.no_grad():
        for i in range(0, len(features), batch_size):
            out.append(head.predict(model.first_logits(features[i:i + batch_size])))
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def evaluate_accuracy(model: TransformerModel, head: Head, data: ClipDataset) -> float:
    return accuracy(predict(model, head, data.eval_features()), data.labels)


def train(model: TransformerModel, cfg: TrainConfig, head: Head, data: ClipDataset,
          dev: ClipDataset | None = None,
          on_epoch: Callable[[int, float, float | None], None] | None = None) -> TrainResult:
    """Cross-entropy training of the currently trainable parameters.

    The learning rate follows :func:`linear_lr` per epoch.  When ``dev`` is
    given, the trainable parameters from the best-dev epoch are restored at
    the end.
    """
    reg = model.registry
    state = OptimizerState(lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    plan_rng = derive_rng(cfg.seed, "plan")
    trainable = reg.trainable_names()
    losses: list[float] = []
    devs: list[float] = []
    best, best_epoch, best_snap = None, None, None
    step = 0
    for epoch in range(cfg.epochs):
        lr = linear_lr(epoch, cfg.epochs, cfg.base_lr)
        plan = make_epoch_plan(data, cfg.samples_per_class, plan_rng)
        total, count = 0.0, 0
        for start in range(0, len(plan), cfg.batch_size):
            batch = plan[start:start + cfg.batch_size]
            x = np.stack([data.features(e.item, e.window_seed) for e in batch]).astype(model.dtype)
            y = np.array([e.class_id for e in batch])
            loss = head.loss(model.first_logits(x), y)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(step, value)
            if trainable:
                loss.backward()
                adam_step(reg, state, lr)
                reg.zero_grad()
            total += value * len(batch)
            count += len(batch)
            step += 1
        losses.append(total / count)
        dev_acc = None
        if dev is not None:
            dev_acc = evaluate_accuracy(model, head, dev)
            devs.append(dev_acc)
            if best is None or dev_acc > best:
                best, best_epoch = dev_acc, epoch
                best_snap = {n: reg[n].data.copy() for n in trainable}
        log.info("epoch %d lr %.2e loss %.4f dev %s", epoch, lr, losses[-1], dev_acc)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1], dev_acc)
    if best_snap is not None:
        for n, arr in best_snap.items():
            reg[n].data = arr
    return TrainResult(losses, devs, best, best_epoch, step)


def report_for(model: TransformerModel, head: Head, cfg: TrainConfig, dev: ClipDataset,
               test: ClipDataset, label: str = "", base_total: int | None = None) -> EvalReport:
    dev_acc = evaluate_accuracy(model, head, dev)
    test_acc = evaluate_accuracy(model, head, test)
    count = model.registry.trainable_count()
    base_total = base_total or base_param_count(model)
    util = utility_score(test_acc, count) if count >= 2 else None
    return EvalReport(dev_acc, test_acc, count, trainable_ratio(count, base_total), util,
                      fingerprint(cfg.to_dict()), label=label, base_lr=cfg.base_lr,
                      plan_fraction=plan_fraction(cfg.samples_per_class))


@dataclass
class SweepResult:
    reports: list[EvalReport]
    winner: int

    @property
    def best(self) -> EvalReport:
        return self.reports[self.winner]

    def winner_line(self) -> str:
        return f"winner: base_lr={self.best.base_lr:g} dev {self.best.dev_accuracy:.2f}%"


def lr_sweep(build: Callable[[], TransformerModel], cfg: TrainConfig, data: ClipDataset,
             dev: ClipDataset, test: ClipDataset, lrs: Sequence[float] = LEARNING_RATES,
             n_classes: int | None = None, label: str = "") -> tuple[SweepResult, list]:
    """Train once per learning rate from a fresh model; the best dev accuracy wins.

    Returns the sweep summary and the trained ``(model, head)`` pairs.
    """
    n_classes = n_classes or len(data.by_class())
    reports, runs = [], []
    for lr in lrs:
        run_cfg = TrainConfig(**{**cfg.__dict__, "base_lr": float(lr)})
        model = build()
        base_total = base_param_count(model)
        head = prepare_model(model, run_cfg, n_classes)
        train(model, run_cfg, head, data, dev)
        reports.append(report_for(model, head, run_cfg, dev, test, label=label, base_total=base_total))
        runs.append((model, head))
    winner = max(range(len(reports)), key=lambda i: (reports[i].dev_accuracy, -i))
    return SweepResult(reports, winner), runs


def write_report(report: EvalReport, out_dir: str | Path, stem: str = "report") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(report.to_json() + "\n")
    (out / f"{stem}.csv").write_text(EvalReport.csv_header() + report.csv_row())


# -- desk-scale pretraining ------------------------------------------------------------------

# Source "languages": twice as many classes on a denser tone grid than the
# default dialect task, so the frozen backbone hears the whole band range.
SOURCE_SYNTH = SynthConfig(n_classes=8, bands_per_class=2, f_lo=90.0, f_hi=930.0)


def source_label_map(config: ModelConfig, seed: int = 0, n_classes: int = SOURCE_SYNTH.n_classes) -> LabelMap:
    """Language tokens the pretrained backbone emits for each source class."""
    tokens = derive_rng(seed, "source-tokens").choice(config.language_tokens, size=n_classes, replace=False)
    return LabelMap.singletons(sorted(tokens.tolist()))


def pretrain_backbone(config: ModelConfig, seed: int = 0, synth: SynthConfig = SOURCE_SYNTH,
                      per_class: int = 250, epochs: int = 6, base_lr: float = 1e-3,
                      batch_size: int = 32, spec: SpectrogramConfig = DESK) -> TransformerModel:
    """Stand-in for a pretrained general-purpose model.

    Trains a fresh model to emit one language token per synthetic source
    class (full-vocabulary cross-entropy at the dialect slot), then returns it
    with every parameter trainable.
    """
    rng = derive_rng(seed, "pretrain-data")
    clips = [synth_dialect(c, spec.seconds, rng, synth)
             for c in range(synth.n_classes) for _ in range(per_class)]
    data = ClipDataset(clips, spec)
    model = TransformerModel.init(config, derive_rng(seed, "model"))
    head = Head("extend", source_label_map(config, seed, synth.n_classes))
    cfg = TrainConfig(base_lr=base_lr, epochs=epochs, batch_size=batch_size, seed=seed,
                      samples_per_class=per_class)
    apply_scope(model.registry, ScopeSelector("full", "all"))
    train(model, cfg, head, data)
    return model
