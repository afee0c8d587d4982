"""Small pre-norm transformer encoder producing per-token features.

Token + learned positional embeddings feed ``n_layers`` blocks of
multi-head self-attention and a GELU feed-forward network, each with a
pre-LayerNorm and a residual connection, followed by a final LayerNorm.
PAD key positions are excluded from attention, so padding a sequence out
further never changes the features at valid positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    dropout,
    embedding,
    gelu,
    layer_norm,
    masked_softmax,
    matmul,
    mul,
    reshape,
    transpose,
)

__all__ = ["EncoderConfig", "init_encoder_params", "encoder_forward", "truncated_normal"]


@dataclass(frozen=True)
class EncoderConfig:
    """Shape hyperparameters; defaults are the desk-scale configuration."""

    vocab_size: int
    hidden_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self) -> None:
        for name in ("vocab_size", "hidden_dim", "n_layers", "n_heads",
                     "ffn_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden_dim % self.n_heads != 0:
            raise ValueError(
                f"hidden_dim={self.hidden_dim} not divisible by n_heads={self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def truncated_normal(
    rng: np.random.Generator, shape: tuple[int, ...], std: float, cut: float = 2.0
) -> np.ndarray:
    """Normal(0, std^2) samples, resampled until inside ±cut standard units."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > cut
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > cut
    return out * std


def init_encoder_params(
    config: EncoderConfig, seed: int | np.random.Generator
) -> dict[str, Tensor]:
    """Deterministic initialization: trunc-normal weights, zero biases,
    LayerNorm gain 1 / bias 0. Dict order is the checkpoint tensor order."""
    rng = np.random.default_rng(seed)
    d = config.hidden_dim
    params: dict[str, Tensor] = {}

    def weight(name: str, shape: tuple[int, ...]) -> None:
        params[name] = Tensor(truncated_normal(rng, shape, std=0.02))

    def zeros(name: str, shape: tuple[int, ...]) -> None:
        params[name] = Tensor(np.zeros(shape))

    def norm(prefix: str) -> None:
        params[f"{prefix}.gain"] = Tensor(np.ones(d))
        params[f"{prefix}.bias"] = Tensor(np.zeros(d))

    weight("tok_emb", (config.vocab_size, d))
    weight("pos_emb", (config.max_len, d))
    for i in range(config.n_layers):
        base = f"layers.{i}"
        norm(f"{base}.attn_norm")
        for proj in ("q", "k", "v", "out"):
            weight(f"{base}.attn.{proj}.w", (d, d))
            # A key-projection bias shifts every score in a query's row by
            # the same amount, which softmax cancels exactly, so the key
            # path carries no bias parameter.
            if proj != "k":
                zeros(f"{base}.attn.{proj}.b", (d,))
        norm(f"{base}.ffn_norm")
        weight(f"{base}.ffn.w1", (d, config.ffn_dim))
        zeros(f"{base}.ffn.b1", (config.ffn_dim,))
        weight(f"{base}.ffn.w2", (config.ffn_dim, d))
        zeros(f"{base}.ffn.b2", (d,))
    norm("final_norm")
    return params


def encoder_forward(
    params: dict[str, Tensor],
    config: EncoderConfig,
    ids: np.ndarray,
    valid_mask: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Encode id matrix [B, T] into features [B, T, hidden_dim].

    ``valid_mask`` is 1.0 at real tokens and 0.0 at PAD; PAD keys never
    receive attention weight. Dropout fires only when ``training``.
    """
    ids = np.asarray(ids)
    valid_mask = np.asarray(valid_mask, dtype=np.float64)
    if ids.ndim != 2 or ids.shape != valid_mask.shape:
        raise ValueError("ids and valid_mask must be matching [batch, len] arrays")
    batch, length = ids.shape
    if length > config.max_len:
        raise ValueError(f"sequence length {length} exceeds max_len={config.max_len}")
    if training and config.dropout > 0.0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")

    n_heads = config.n_heads
    head_dim = config.hidden_dim // n_heads
    scale = 1.0 / math.sqrt(head_dim)
    key_mask = valid_mask.astype(bool)[:, None, None, :]

    def drop(t: Tensor) -> Tensor:
        if training and config.dropout > 0.0:
            return dropout(t, config.dropout, rng)
        return t

    def split_heads(t: Tensor) -> Tensor:
        t = reshape(t, (batch, length, n_heads, head_dim))
        return transpose(t, (0, 2, 1, 3))

    x = add(
        embedding(params["tok_emb"], ids),
        embedding(params["pos_emb"], np.arange(length)),
    )
    x = drop(x)
    for i in range(config.n_layers):
        base = f"layers.{i}"
        normed = layer_norm(
            x, params[f"{base}.attn_norm.gain"], params[f"{base}.attn_norm.bias"]
        )
        q = split_heads(add(matmul(normed, params[f"{base}.attn.q.w"]),
                            params[f"{base}.attn.q.b"]))
        k = split_heads(matmul(normed, params[f"{base}.attn.k.w"]))
        v = split_heads(add(matmul(normed, params[f"{base}.attn.v.w"]),
                            params[f"{base}.attn.v.b"]))
        scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), scale)
        attn = masked_softmax(scores, key_mask)
        context = transpose(matmul(attn, v), (0, 2, 1, 3))
        context = reshape(context, (batch, length, config.hidden_dim))
        attn_out = add(matmul(context, params[f"{base}.attn.out.w"]),
                       params[f"{base}.attn.out.b"])
        x = add(x, drop(attn_out))

        normed = layer_norm(
            x, params[f"{base}.ffn_norm.gain"], params[f"{base}.ffn_norm.bias"]
        )
        hidden = gelu(add(matmul(normed, params[f"{base}.ffn.w1"]),
                          params[f"{base}.ffn.b1"]))
        ffn_out = add(matmul(hidden, params[f"{base}.ffn.w2"]),
                      params[f"{base}.ffn.b2"])
        x = add(x, drop(ffn_out))
    return layer_norm(x, params["final_norm.gain"], params["final_norm.bias"])
