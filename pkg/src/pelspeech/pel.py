"""Parameter-efficient mechanisms: residual adapters, input reprogramming and
the scope selectors (full/encoder/decoder x all/bias/adapters/...) that decide
which registry entries train."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamRegistry
from .model import TransformerModel

log = logging.getLogger(__name__)

REGIONS = ("full", "encoder", "decoder")
KINDS = ("all", "bias_only", "adapters_only", "reprogram_only", "embed_only")


@dataclass
class AdapterConfig:
    """Bottleneck adapters ``x + gelu(x W_dp + b_dp) W_up + b_up`` at block outputs.

    ``sites`` defaults to every encoder block.
    """

    bottleneck: int = 16
    sites: list[tuple[str, int]] | None = None
    use_bias: bool = True
    up_init: str = "zero"

    def resolved_sites(self, n_encoder: int) -> list[tuple[str, int]]:
        if self.sites is None:
            return [("encoder", i) for i in range(n_encoder)]
        return [(str(s), int(i)) for s, i in self.sites]

    def to_dict(self) -> dict:
        return {
            "bottleneck": self.bottleneck,
            "sites": None if self.sites is None else [list(s) for s in self.sites],
            "use_bias": self.use_bias,
            "up_init": self.up_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AdapterConfig:
        d = dict(d)
        if d.get("sites") is not None:
            d["sites"] = [tuple(s) for s in d["sites"]]
        return cls(**d)


def adapter_param_count(n: int, b: int, sites: int, use_bias: bool = True) -> int:
    """Accounting contract: ``sites * (2nb + b + n)`` with biases, ``sites * 2nb`` without."""
    return sites * (2 * n * b + (b + n if use_bias else 0))


def insert_adapters(model: TransformerModel, cfg: AdapterConfig,
                    rng: np.random.Generator) -> TransformerModel:
    n = model.config.d_model
    b = cfg.bottleneck
    if not 0 < b < n:
        raise ValueError(f"bottleneck {b} must lie in (0, {n})")
    if cfg.up_init not in ("zero", "small-random"):
        raise ValueError(f"unknown up_init {cfg.up_init!r}")
    sites = cfg.resolved_sites(model.config.encoder_layers)
    if len(set(sites)) != len(sites):
        raise ValueError("adapter sites must be unique")
    layers = {"encoder": model.config.encoder_layers, "decoder": model.config.decoder_layers}
    for side, i in sites:
        if side not in layers or not 0 <= i < layers[side]:
            raise ValueError(f"adapter site ({side}, {i}) out of range")
        if f"adapter.{side}.{i}.down.weight" in model.registry:
            raise ValueError(f"adapter already present at ({side}, {i})")

    dtype = model.dtype
    reg = model.registry
    for side, i in sites:
        prefix = f"adapter.{side}.{i}"
        bound = 1.0 / np.sqrt(n)
        reg.add(f"{prefix}.down.weight", rng.uniform(-bound, bound, (n, b)).astype(dtype))
        if cfg.use_bias:
            reg.add(f"{prefix}.down.bias", np.zeros(b, dtype))
        if cfg.up_init == "zero":
            up = np.zeros((b, n), dtype)
        else:
            up = (1e-3 * rng.standard_normal((b, n))).astype(dtype)
        reg.add(f"{prefix}.up.weight", up)
        if cfg.use_bias:
            reg.add(f"{prefix}.up.bias", np.zeros(n, dtype))
    return model


@dataclass
class ReprogramDelta:
    """Trainable additive perturbation with the exact input geometry."""

    delta: np.ndarray

    @classmethod
    def zeros(cls, mel_bins: int, frames: int, dtype=np.float32) -> ReprogramDelta:
        return cls(np.zeros((mel_bins, frames), dtype))


def attach_reprogram(model: TransformerModel, delta: ReprogramDelta) -> TransformerModel:
    want = (model.config.mel_bins, model.config.max_frames)
    if tuple(delta.delta.shape) != want:
        raise ValueError(f"delta shape {delta.delta.shape} does not match input {want}")
    if model.has_reprogram:
        raise ValueError("model already carries a reprogramming delta")
    model.registry.add("reprogram.delta", np.array(delta.delta, dtype=model.dtype))
    return model


@dataclass(frozen=True)
class ScopeSelector:
    region: str = "full"
    kind: str = "all"

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r}; expected one of {REGIONS}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")

    @classmethod
    def parse(cls, text: str) -> ScopeSelector:
        """``"encoder:bias_only"`` -> ScopeSelector("encoder", "bias_only")."""
        region, _, kind = text.partition(":")
        return cls(region, kind or "all")

    def __str__(self) -> str:
        return f"{self.region}:{self.kind}"

    def matches(self, name: str) -> bool:
        top = name.split(".", 1)[0]
        region = self.region
        if self.kind == "all":
            if region == "full":
                return top in ("encoder", "decoder", "embed")
            return top == region
        if self.kind == "bias_only":
            if name == "embed.tokens_ext":
                # the dialect rows are the task head; counted with the whole model only
                return region == "full"
            in_region = top in ("encoder", "decoder") if region == "full" else top == region
            return in_region and name.endswith(".bias")
        if self.kind == "adapters_only":
            if top != "adapter":
                return False
            return region == "full" or name.split(".")[1] == region
        if self.kind == "reprogram_only":
            # the delta sits on the encoder input
            return top == "reprogram" and region in ("full", "encoder")
        if self.kind == "embed_only":
            return top == "embed" and region == "full"
        return False


def resolve_scope(registry: ParamRegistry, selector: ScopeSelector) -> list[str]:
    return [n for n in registry.names() if selector.matches(n)]


def count_params(model_or_registry, selector: ScopeSelector) -> int:
    reg = getattr(model_or_registry, "registry", model_or_registry)
    return reg.total_count(selector.matches)


def base_param_count(model_or_registry) -> int:
    """Size of the backbone alone (what trainable ratios are measured against)."""
    return count_params(model_or_registry, ScopeSelector("full", "all"))


@dataclass
class ScopeResult:
    selector: ScopeSelector
    names: list[str] = field(default_factory=list)
    count: int = 0

    @property
    def empty(self) -> bool:
        return not self.names


def apply_scope(registry: ParamRegistry, selector: ScopeSelector) -> ScopeResult:
    """Make exactly the selected parameters trainable and freeze the rest."""
    names = set(resolve_scope(registry, selector))
    for name in registry.names():
        registry.set_trainable(name, name in names)
    result = ScopeResult(selector, [n for n in registry.names() if n in names],
                         registry.trainable_count())
    if result.empty:
        log.warning("scope %s matches no parameters; everything is frozen", selector)
    return result
