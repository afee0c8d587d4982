"""Task-specific gating heads over shared per-token features.

Each task owns a small two-layer network that maps every token's feature
row to a scalar gate in (0, 1). Gated features are pooled by the sum of
gate values, so tokens the task ignores contribute nothing, and a linear
layer on the pooled vector produces the task logit. PAD positions are
forced to gate 0 and excluded from pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    div,
    gelu,
    layer_norm,
    matmul,
    mul,
    reduce_sum,
    reshape,
    sigmoid,
)
from .encoder import truncated_normal

__all__ = [
    "TaskHeadParams",
    "HeadOutput",
    "init_head_params",
    "compute_mask",
    "apply_mask",
    "pool",
    "predict",
    "forward_heads",
    "POOL_EPS",
]

POOL_EPS = 1e-8


@dataclass
class TaskHeadParams:
    """Per-task parameters: gate network (w1, b1, w2, b2) and output layer."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w_out: Tensor
    b_out: Tensor


@dataclass
class HeadOutput:
    """One task's forward products for a batch."""

    mask: Tensor      # [B, T] gate values, 0 at PAD
    context: Tensor   # [B, D] pooled gated features
    logit: Tensor     # [B]


def init_head_params(
    hidden_dim: int,
    mask_hidden_dim: int,
    rng: np.random.Generator,
) -> TaskHeadParams:
    """w2/b2 start at zero so every gate opens at exactly 0.5."""
    if mask_hidden_dim <= 0:
        raise ValueError("mask_hidden_dim must be positive")
    return TaskHeadParams(
        w1=Tensor(truncated_normal(rng, (hidden_dim, mask_hidden_dim), std=0.02)),
        b1=Tensor(np.zeros(mask_hidden_dim)),
        w2=Tensor(np.zeros((mask_hidden_dim, 1))),
        b2=Tensor(np.zeros(1)),
        w_out=Tensor(truncated_normal(rng, (hidden_dim, 1), std=0.02)),
        b_out=Tensor(np.zeros(1)),
    )


def compute_mask(
    head: TaskHeadParams,
    features: Tensor,
    valid_mask: np.ndarray,
    norm: str = "input",
) -> Tensor:
    """Per-token gates in (0, 1); exactly 0 at PAD positions.

    ``norm`` selects where the parameterless LayerNorm sits: on the input
    feature row (default) or on the hidden activation.
    """
    if norm not in ("input", "hidden"):
        raise ValueError(f"unknown mask norm placement {norm!r}")
    batch, length, _ = features.data.shape
    x = layer_norm(features) if norm == "input" else features
    hidden = add(matmul(x, head.w1), head.b1)
    if norm == "hidden":
        hidden = layer_norm(hidden)
    hidden = gelu(hidden)
    gate_logits = reshape(add(matmul(hidden, head.w2), head.b2), (batch, length))
    return mul(sigmoid(gate_logits), np.asarray(valid_mask, dtype=np.float64))


def apply_mask(mask: Tensor, features: Tensor) -> Tensor:
    """Scale each token's feature row by its gate (broadcast over hidden dim)."""
    batch, length = mask.data.shape
    return mul(features, reshape(mask, (batch, length, 1)))


def pool(
    gated: Tensor,
    mask: Tensor,
    valid_mask: np.ndarray,
    eps: float = POOL_EPS,
) -> Tensor:
    """Sum gated features over valid tokens, normalized by the gate total.

    With a uniform gate this reduces to the mean over valid tokens; scaling
    every gate by a constant leaves the result unchanged up to eps.
    """
    valid = np.asarray(valid_mask, dtype=np.float64)
    batch = mask.data.shape[0]
    numer = reduce_sum(mul(gated, valid[:, :, None]), axis=1)
    denom = add(reduce_sum(mul(mask, valid), axis=1), eps)
    return div(numer, reshape(denom, (batch, 1)))


def predict(head: TaskHeadParams, context: Tensor) -> Tensor:
    """Linear task logit from the pooled context vector."""
    batch = context.data.shape[0]
    return reshape(add(matmul(context, head.w_out), head.b_out), (batch,))


def forward_heads(
    heads: list[TaskHeadParams],
    features: Tensor,
    valid_mask: np.ndarray,
    eps: float = POOL_EPS,
    norm: str = "input",
) -> list[HeadOutput]:
    """Run every task head on shared features; heads never interact."""
    outputs = []
    for head in heads:
        mask = compute_mask(head, features, valid_mask, norm=norm)
        context = pool(apply_mask(mask, features), mask, valid_mask, eps=eps)
        outputs.append(HeadOutput(mask=mask, context=context,
                                  logit=predict(head, context)))
    return outputs
