"""Composite training objective: masked BCE plus a gate sparsity penalty.

Per task the prediction loss is binary cross-entropy averaged over the
labeled entries only (a zero label-indicator removes both the loss term
and its gradient, exactly). The sparsity penalty is the labeled-average
L1 norm of the gate vector over valid tokens. The total objective is the
unweighted mean of the per-task composites over a fixed task count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, add, bce_with_logits, div, mul, reduce_sum

__all__ = ["LossReport", "bce_masked", "l1_penalty", "task_loss", "total_loss"]


@dataclass
class LossReport:
    """Float snapshot of one objective evaluation (no tensors)."""

    total: float
    lam: float
    task_names: list[str]
    pred: list[float] = field(default_factory=list)       # per-task BCE
    sparsity: list[float] = field(default_factory=list)   # per-task L1 term
    combined: list[float] = field(default_factory=list)   # pred + lam * sparsity
    labeled: list[int] = field(default_factory=list)      # per-task label counts

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "lambda": self.lam,
            "tasks": [
                {
                    "task": name,
                    "loss": self.combined[i],
                    "bce": self.pred[i],
                    "l1": self.sparsity[i],
                    "labeled": self.labeled[i],
                }
                for i, name in enumerate(self.task_names)
            ],
        }


def bce_masked(
    logits: Tensor,
    targets: np.ndarray,
    labeled: np.ndarray,
    pos_weight: float | None = None,
) -> Tensor:
    """BCE over labeled entries, normalized by the labeled count.

    ``labeled`` is the 0/1 indicator of observed labels; entries with
    indicator 0 contribute exactly zero loss and zero gradient. Returns a
    constant 0 when nothing is labeled. ``pos_weight`` optionally scales
    the positive-class terms.
    """
    y = np.asarray(targets, dtype=np.float64)
    ind = np.asarray(labeled, dtype=np.float64)
    if y.shape != logits.data.shape or ind.shape != logits.data.shape:
        raise ValueError("logits, targets, and labeled must share a shape")
    if not np.all((ind == 0) | (y == 0) | (y == 1)):
        bad = tuple(int(i) for i in np.argwhere((ind != 0) & (y != 0) & (y != 1))[0])
        raise ValueError(f"label {y[bad]} at {bad} is not 0 or 1")
    n_labeled = float(ind.sum())
    if n_labeled == 0.0:
        return Tensor(0.0)
    weights = ind
    if pos_weight is not None:
        weights = ind * np.where(y == 1, float(pos_weight), 1.0)
    elementwise = bce_with_logits(logits, y)
    return div(reduce_sum(mul(elementwise, weights)), n_labeled)


def l1_penalty(
    mask: Tensor,
    valid_mask: np.ndarray,
    labeled: np.ndarray,
    normalize_by_length: bool = False,
) -> Tensor:
    """Labeled-average L1 norm of the gate vector, PAD excluded.

    Gates are nonnegative, so the L1 norm is a plain sum over valid
    positions; ``normalize_by_length`` divides each molecule's norm by its
    valid-token count instead of leaving the raw sum.
    """
    valid = np.asarray(valid_mask, dtype=np.float64)
    ind = np.asarray(labeled, dtype=np.float64)
    if np.any(mask.data < 0):
        raise ValueError("gate values must be nonnegative")
    n_labeled = float(ind.sum())
    if n_labeled == 0.0:
        return Tensor(0.0)
    per_molecule = reduce_sum(mul(mask, valid), axis=1)
    if normalize_by_length:
        per_molecule = div(per_molecule, valid.sum(axis=1))
    return div(reduce_sum(mul(per_molecule, ind)), n_labeled)


def task_loss(pred: Tensor, sparsity: Tensor, lam: float) -> Tensor:
    """Composite per-task loss pred + lam * sparsity; lam must be >= 0."""
    if lam < 0:
        raise ValueError(f"sparsity weight must be nonnegative, got {lam}")
    return add(pred, mul(sparsity, lam))


def total_loss(task_losses: list[Tensor]) -> Tensor:
    """Unweighted mean over the fixed task list, accumulated in task order."""
    if not task_losses:
        raise ValueError("no task losses to combine")
    acc = task_losses[0]
    for term in task_losses[1:]:
        acc = add(acc, term)
    return div(acc, float(len(task_losses)))
