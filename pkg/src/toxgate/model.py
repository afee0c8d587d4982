"""Full model: shared encoder plus one gating head per task.

Parameters live in one flat name -> Tensor table whose insertion order is
the checkpoint tensor order. Head parameters are exposed both in the table
(as ``heads.{k}.*``) and as TaskHeadParams views sharing the same tensors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, stable_sigmoid
from .encoder import EncoderConfig, encoder_forward, init_encoder_params
from .heads import (
    POOL_EPS,
    HeadOutput,
    TaskHeadParams,
    forward_heads,
    init_head_params,
)
from .tokenizer import BOS_ID, EOS_ID

__all__ = ["Model"]

_HEAD_FIELDS = ("w1", "b1", "w2", "b2", "w_out", "b_out")


@dataclass
class Model:
    config: EncoderConfig
    task_names: list[str]
    mask_hidden_dim: int
    mask_norm: str = "input"
    pool_eps: float = POOL_EPS
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        config: EncoderConfig,
        task_names: list[str],
        seed: int,
        mask_hidden_dim: int | None = None,
        mask_norm: str = "input",
        pool_eps: float = POOL_EPS,
    ) -> "Model":
        """Deterministic initialization of encoder and all task heads."""
        if not task_names:
            raise ValueError("at least one task is required")
        if len(set(task_names)) != len(task_names):
            raise ValueError("task names must be unique")
        if mask_hidden_dim is None:
            mask_hidden_dim = max(1, config.hidden_dim // 2)
        rng = np.random.default_rng(seed)
        params = init_encoder_params(config, rng)
        for k in range(len(task_names)):
            head = init_head_params(config.hidden_dim, mask_hidden_dim, rng)
            for name in _HEAD_FIELDS:
                params[f"heads.{k}.{name}"] = getattr(head, name)
        return cls(
            config=config,
            task_names=list(task_names),
            mask_hidden_dim=mask_hidden_dim,
            mask_norm=mask_norm,
            pool_eps=pool_eps,
            params=params,
        )

    @property
    def n_tasks(self) -> int:
        return len(self.task_names)

    def head(self, k: int) -> TaskHeadParams:
        return TaskHeadParams(
            **{name: self.params[f"heads.{k}.{name}"] for name in _HEAD_FIELDS}
        )

    def heads(self) -> list[TaskHeadParams]:
        return [self.head(k) for k in range(self.n_tasks)]

    @staticmethod
    def content_mask(ids: np.ndarray, valid_mask: np.ndarray) -> np.ndarray:
        """Molecule-token positions: valid minus the BOS/EOS framing.

        Heads gate and pool content tokens only; otherwise the anchor
        positions (into which attention aggregates whole-molecule
        information) offer the gates a token-independent shortcut.
        """
        ids = np.asarray(ids)
        return np.asarray(valid_mask, dtype=np.float64) * (ids != BOS_ID) * (
            ids != EOS_ID
        )

    def forward(
        self,
        ids: np.ndarray,
        valid_mask: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, list[HeadOutput]]:
        features = encoder_forward(
            self.params, self.config, ids, valid_mask, training=training, rng=rng
        )
        outputs = forward_heads(
            self.heads(),
            features,
            self.content_mask(ids, valid_mask),
            eps=self.pool_eps,
            norm=self.mask_norm,
        )
        return features, outputs

    def predict_proba(self, ids: np.ndarray, valid_mask: np.ndarray) -> np.ndarray:
        """Eval-mode class probabilities, shape [B, n_tasks]."""
        _, outputs = self.forward(ids, valid_mask, training=False)
        return np.stack([stable_sigmoid(o.logit.data) for o in outputs], axis=1)

    def trainable_params(self, freeze_backbone: bool = False) -> dict[str, Tensor]:
        if not freeze_backbone:
            return dict(self.params)
        return {k: v for k, v in self.params.items() if k.startswith("heads.")}

    def architecture(self) -> dict:
        """JSON-ready description of everything except the weights."""
        return {
            "vocab_size": self.config.vocab_size,
            "hidden_dim": self.config.hidden_dim,
            "n_layers": self.config.n_layers,
            "n_heads": self.config.n_heads,
            "ffn_dim": self.config.ffn_dim,
            "max_len": self.config.max_len,
            "dropout": self.config.dropout,
            "task_names": self.task_names,
            "mask_hidden_dim": self.mask_hidden_dim,
            "mask_norm": self.mask_norm,
            "pool_eps": self.pool_eps,
        }

    def fingerprint(self) -> str:
        """Short stable hash of architecture and weights."""
        digest = hashlib.sha256()
        digest.update(json.dumps(self.architecture(), sort_keys=True).encode())
        for name, tensor in self.params.items():
            digest.update(name.encode())
            digest.update(tensor.data.astype("<f8").tobytes())
        return digest.hexdigest()[:16]
