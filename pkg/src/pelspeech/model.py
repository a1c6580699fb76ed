"""Desk-scale Whisper-shaped encoder-decoder transformer.

Everything the network owns lives in one :class:`ParamRegistry` under dotted
paths prefixed ``encoder.``, ``decoder.`` or ``embed.``; mechanisms added later
register under ``adapter.`` and ``reprogram.``.  The forward pass reads the
registry on every call, so structural changes (new vocabulary rows, adapters,
an input delta) take effect without rebuilding the model object.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamRegistry, Tensor

SOT = 0  # start-of-transcript token fed to the decoder


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    vocab_size: int = 128
    mel_bins: int = 16
    max_frames: int = 150
    max_decoder_positions: int = 8
    n_language_tokens: int = 99
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.vocab_size < 1 + self.n_language_tokens:
            raise ValueError(
                f"vocab_size {self.vocab_size} cannot hold SOT + {self.n_language_tokens} language tokens"
            )
        if self.max_frames % 2:
            raise ValueError("max_frames must be even (stride-2 stem)")

    @property
    def encoder_positions(self) -> int:
        return self.max_frames // 2

    @property
    def language_tokens(self) -> list[int]:
        return list(range(1, 1 + self.n_language_tokens))

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoids(length: int, channels: int, max_timescale: float = 10000.0) -> np.ndarray:
    half = channels // 2
    inc = math.log(max_timescale) / (half - 1)
    inv = np.exp(-inc * np.arange(half))
    t = np.arange(length)[:, None] * inv[None, :]
    return np.concatenate([np.sin(t), np.cos(t)], axis=1)


def _linear_init(reg: ParamRegistry, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, bias: bool = True) -> None:
    bound = 1.0 / math.sqrt(n_in)
    reg.add(f"{name}.weight", rng.uniform(-bound, bound, (n_in, n_out)).astype(np.float32))
    if bias:
        reg.add(f"{name}.bias", rng.uniform(-bound, bound, n_out).astype(np.float32))


def _ln_init(reg: ParamRegistry, name: str, n: int) -> None:
    reg.add(f"{name}.weight", np.ones(n, np.float32))
    reg.add(f"{name}.bias", np.zeros(n, np.float32))


def _block_init(reg: ParamRegistry, prefix: str, n: int, hidden: int,
                rng: np.random.Generator, cross: bool) -> None:
    parts = ["attn", "cross_attn"] if cross else ["attn"]
    for part in parts:
        _ln_init(reg, f"{prefix}.{part}_ln", n)
        _linear_init(reg, f"{prefix}.{part}.query", n, n, rng)
        _linear_init(reg, f"{prefix}.{part}.key", n, n, rng, bias=False)
        _linear_init(reg, f"{prefix}.{part}.value", n, n, rng)
        _linear_init(reg, f"{prefix}.{part}.out", n, n, rng)
    _ln_init(reg, f"{prefix}.mlp_ln", n)
    _linear_init(reg, f"{prefix}.mlp.fc1", n, hidden, rng)
    _linear_init(reg, f"{prefix}.mlp.fc2", hidden, n, rng)


class TransformerModel:
    """Encoder over log-Mel frames, decoder over tokens, tied output projection."""

    def __init__(self, config: ModelConfig, registry: ParamRegistry):
        self.config = config
        self.registry = registry
        self._pos = sinusoids(config.encoder_positions, config.d_model)

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> TransformerModel:
        n, h = config.d_model, config.d_model * config.mlp_ratio
        reg = ParamRegistry()
        bound1 = 1.0 / math.sqrt(config.mel_bins * 3)
        reg.add("encoder.conv1.weight", rng.uniform(-bound1, bound1, (n, config.mel_bins, 3)).astype(np.float32))
        reg.add("encoder.conv1.bias", rng.uniform(-bound1, bound1, n).astype(np.float32))
        bound2 = 1.0 / math.sqrt(n * 3)
        reg.add("encoder.conv2.weight", rng.uniform(-bound2, bound2, (n, n, 3)).astype(np.float32))
        reg.add("encoder.conv2.bias", rng.uniform(-bound2, bound2, n).astype(np.float32))
        for i in range(config.encoder_layers):
            _block_init(reg, f"encoder.blocks.{i}", n, h, rng, cross=False)
        _ln_init(reg, "encoder.ln_post", n)

        reg.add("decoder.positional_embedding",
                (0.02 * rng.standard_normal((config.max_decoder_positions, n))).astype(np.float32))
        for i in range(config.decoder_layers):
            _block_init(reg, f"decoder.blocks.{i}", n, h, rng, cross=True)
        _ln_init(reg, "decoder.ln", n)

        reg.add("embed.tokens", (0.02 * rng.standard_normal((config.vocab_size, n))).astype(np.float32))
        return cls(config, reg)

    # -- structure ------------------------------------------------------------
    @property
    def dtype(self):
        return self.registry["embed.tokens"].dtype

    @property
    def vocab_size(self) -> int:
        extra = self.registry["embed.tokens_ext"].shape[0] if "embed.tokens_ext" in self.registry else 0
        return self.config.vocab_size + extra

    @property
    def adapter_sites(self) -> list[tuple[str, int]]:
        sites = set()
        for name in self.registry:
            if name.startswith("adapter.") and name.endswith(".down.weight"):
                _, side, layer, *_ = name.split(".")
                sites.add((side, int(layer)))
        return sorted(sites)

    @property
    def has_reprogram(self) -> bool:
        return "reprogram.delta" in self.registry

    def clone(self) -> TransformerModel:
        """Deep copy with the same names, values and trainable flags."""
        reg = ParamRegistry()
        for name, t in self.registry.items():
            reg.add(name, t.data.copy(), trainable=self.registry.is_trainable(name))
        return TransformerModel(self.config, reg)

    def astype(self, dtype) -> TransformerModel:
        self.registry.astype(dtype)
        return self

    def token_embedding(self) -> Tensor:
        w = self.registry["embed.tokens"]
        if "embed.tokens_ext" in self.registry:
            return ad.concat([w, self.registry["embed.tokens_ext"]], axis=0)
        return w

    # -- forward ------------------------------------------------------------------
    def _p(self, name: str) -> Tensor:
        return self.registry[name]

    def _linear(self, x: Tensor, name: str) -> Tensor:
        bias = self.registry[f"{name}.bias"] if f"{name}.bias" in self.registry else None
        return ad.linear(x, self._p(f"{name}.weight"), bias)

    def _ln(self, x: Tensor, name: str) -> Tensor:
        return ad.layer_norm(x, self._p(f"{name}.weight"), self._p(f"{name}.bias"))

    def _attention(self, x: Tensor, source: Tensor, name: str, causal: bool) -> Tensor:
        b, lq, n = x.shape
        lk = source.shape[1]
        h = self.config.n_heads
        dh = n // h
        q = self._linear(x, f"{name}.query").reshape(b, lq, h, dh).transpose(0, 2, 1, 3)
        k = self._linear(source, f"{name}.key").reshape(b, lk, h, dh).transpose(0, 2, 3, 1)
        v = self._linear(source, f"{name}.value").reshape(b, lk, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k) * (1.0 / math.sqrt(dh))
        if causal and lq > 1:
            mask = np.triu(np.full((lq, lk), -np.inf, dtype=x.dtype), k=1)
            scores = scores + mask
        w = ad.softmax(scores, axis=-1)
        out = (w @ v).transpose(0, 2, 1, 3).reshape(b, lq, n)
        return self._linear(out, f"{name}.out")

    def _mlp(self, x: Tensor, name: str) -> Tensor:
        return self._linear(ad.gelu(self._linear(x, f"{name}.fc1")), f"{name}.fc2")

    def _adapter(self, x: Tensor, side: str, layer: int) -> Tensor:
        prefix = f"adapter.{side}.{layer}"
        if f"{prefix}.down.weight" not in self.registry:
            return x
        hidden = ad.gelu(self._linear(x, f"{prefix}.down"))
        return x + self._linear(hidden, f"{prefix}.up")

    def encode(self, mel) -> Tensor:
        """(batch, mel_bins, frames) -> (batch, frames // 2, d_model)."""
        x = mel if isinstance(mel, Tensor) else Tensor(np.asarray(mel, dtype=self.dtype))
        if x.ndim == 2:
            x = x.reshape(1, *x.shape)
        cfg = self.config
        if x.shape[1:] != (cfg.mel_bins, cfg.max_frames):
            raise ValueError(
                f"expected input of shape ({cfg.mel_bins}, {cfg.max_frames}), got {x.shape[1:]}"
            )
        if self.has_reprogram:
            x = x + self._p("reprogram.delta")
        x = ad.gelu(ad.conv1d(x, self._p("encoder.conv1.weight"), self._p("encoder.conv1.bias"), padding=1))
        x = ad.gelu(ad.conv1d(x, self._p("encoder.conv2.weight"), self._p("encoder.conv2.bias"),
                              stride=2, padding=1))
        x = x.transpose(0, 2, 1) + self._pos.astype(self.dtype)
        for i in range(cfg.encoder_layers):
            x = self._enc_block(x, f"encoder.blocks.{i}")
            x = self._adapter(x, "encoder", i)
        return self._ln(x, "encoder.ln_post")

    def _enc_block(self, x: Tensor, pre: str) -> Tensor:
        y = self._ln(x, f"{pre}.attn_ln")
        x = x + self._attention(y, y, f"{pre}.attn", causal=False)
        return x + self._mlp(self._ln(x, f"{pre}.mlp_ln"), f"{pre}.mlp")

    def decode(self, tokens, audio: Tensor) -> Tensor:
        """(batch, length) token ids + encoder states -> (batch, length, vocab) logits."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise ValueError(f"token id outside vocabulary of size {self.vocab_size}")
        length = tokens.shape[1]
        if length > self.config.max_decoder_positions:
            raise ValueError(f"{length} tokens exceed max_decoder_positions")
        if tokens.shape[0] != audio.shape[0]:
            tokens = np.broadcast_to(tokens, (audio.shape[0], length))
        emb = self.token_embedding()
        x = ad.embedding(emb, tokens) + self._p("decoder.positional_embedding")[:length]
        for i in range(self.config.decoder_layers):
            pre = f"decoder.blocks.{i}"
            y = self._ln(x, f"{pre}.attn_ln")
            x = x + self._attention(y, y, f"{pre}.attn", causal=True)
            x = x + self._attention(self._ln(x, f"{pre}.cross_attn_ln"), audio, f"{pre}.cross_attn", causal=False)
            x = x + self._mlp(self._ln(x, f"{pre}.mlp_ln"), f"{pre}.mlp")
            x = self._adapter(x, "decoder", i)
        x = self._ln(x, "decoder.ln")
        return x @ emb.T

    def forward(self, mel, tokens=(SOT,)) -> Tensor:
        """Per-position vocabulary logits.

        Unbatched ``mel`` (mel_bins, frames) gives (len(tokens), vocab);
        batched input gives (batch, len(tokens), vocab).
        """
        batched = (mel.ndim if isinstance(mel, Tensor) else np.ndim(mel)) == 3
        logits = self.decode(tokens, self.encode(mel))
        return logits if batched else logits.reshape(logits.shape[1:])

    __call__ = forward

    def first_logits(self, mel) -> Tensor:
        """Logits at the dialect slot: the output just after the start token."""
        logits = self.decode([SOT], self.encode(mel))
        return logits[:, 0, :]


def extend_vocab(model: TransformerModel, d: int, rng: np.random.Generator) -> list[int]:
    """Append ``d`` embedding rows; returns the new token ids.

    Old rows stay bit-identical.  New rows are drawn from a normal with the
    current embedding's empirical standard deviation.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    start = model.vocab_size
    base = model.token_embedding().data
    std = float(base.std())
    rows = (std * rng.standard_normal((d, base.shape[1]))).astype(base.dtype)
    reg = model.registry
    if "embed.tokens_ext" in reg:
        grown = np.concatenate([reg["embed.tokens_ext"].data, rows], axis=0)
        reg.replace("embed.tokens_ext", grown)
    else:
        reg.add("embed.tokens_ext", rows, trainable=reg.is_trainable("embed.tokens"))
    return list(range(start, start + d))
