"""AdamW with decoupled weight decay.

Moment estimates are bias-corrected; the decay term is applied directly to
the parameter, outside the adaptive update. Biases and LayerNorm gains
never decay (anything whose name ends in a bias/gain/b* field).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["AdamWConfig", "AdamWState", "adamw_step", "applies_weight_decay"]

_NO_DECAY_SUFFIXES = ("bias", "gain", "b", "b1", "b2", "b_out")


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 3e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("betas must be in [0, 1)")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("eps must be positive and weight_decay nonnegative")


@dataclass
class AdamWState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamWState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def applies_weight_decay(name: str) -> bool:
    return name.rsplit(".", 1)[-1] not in _NO_DECAY_SUFFIXES


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    config: AdamWConfig,
) -> None:
    """One in-place update over every named parameter."""
    state.step += 1
    t = state.step
    bias1 = 1.0 - config.beta1**t
    bias2 = 1.0 - config.beta2**t
    for name, param in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        update = config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        if config.weight_decay > 0.0 and applies_weight_decay(name):
            # Decoupled decay acts on the pre-update parameter value.
            update = update + config.lr * config.weight_decay * param.data
        param.data -= update
