"""Many-to-one hard mapping from source language tokens to dialect classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LabelMap:
    """``groups[d]`` is the tuple of token ids whose logits sum to dialect ``d``'s score."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for d, g in enumerate(self.groups):
            if not g:
                raise ValueError(f"dialect {d} has no tokens")
            if seen.intersection(g):
                raise ValueError("token groups must be disjoint")
            seen.update(g)

    @property
    def n_dialects(self) -> int:
        return len(self.groups)

    @property
    def tokens(self) -> list[int]:
        return [t for g in self.groups for t in g]

    @classmethod
    def singletons(cls, token_ids) -> LabelMap:
        return cls(tuple((int(t),) for t in token_ids))

    def matrix(self, vocab_size: int, dtype=np.float32) -> np.ndarray:
        """(vocab, dialects) 0/1 matrix; ``logits @ M`` gives the group sums."""
        if max(self.tokens) >= vocab_size:
            raise ValueError(f"map uses token {max(self.tokens)} beyond vocabulary {vocab_size}")
        m = np.zeros((vocab_size, self.n_dialects), dtype)
        for d, g in enumerate(self.groups):
            m[list(g), d] = 1.0
        return m

    def to_dict(self) -> dict:
        return {"groups": [list(g) for g in self.groups]}

    @classmethod
    def from_dict(cls, d: dict) -> LabelMap:
        return cls(tuple(tuple(int(t) for t in g) for g in d["groups"]))


def random_map(dialects: int, tokens_per_dialect: int, language_token_pool,
               rng: np.random.Generator) -> LabelMap:
    """Assign disjoint, uniformly drawn language tokens to every dialect."""
    pool = np.array(sorted(set(int(t) for t in language_token_pool)))
    need = dialects * tokens_per_dialect
    if need > pool.size:
        raise ValueError(f"need {need} language tokens but the pool holds {pool.size}")
    picked = rng.permutation(pool)[:need].reshape(dialects, tokens_per_dialect)
    return LabelMap(tuple(tuple(int(t) for t in row) for row in picked))


def group_scores(logits: Tensor, lmap: LabelMap) -> Tensor:
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    return logits @ lmap.matrix(logits.shape[-1], logits.dtype)


def dialect_log_probs(logits: Tensor, lmap: LabelMap) -> Tensor:
    return ad.log_softmax(group_scores(logits, lmap), axis=-1)


def dialect_probs(logits, lmap: LabelMap) -> Tensor:
    """Softmax over per-dialect sums of the assigned token logits."""
    return ad.softmax(group_scores(logits, lmap), axis=-1)


def predict_dialect(logits, lmap: LabelMap):
    """Argmax of the dialect scores; ties go to the lowest dialect id."""
    with ad.no_grad():
        scores = group_scores(logits, lmap).data
    # np.argmax returns the first maximum
    pred = np.argmax(scores, axis=-1)
    return int(pred) if pred.ndim == 0 else pred
