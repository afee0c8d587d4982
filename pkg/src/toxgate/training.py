"""Training loop, evaluation helpers, and the sparsity-weight sweep.

One training step: seeded shuffle, batch forward through encoder and all
task heads, composite loss (masked BCE + weighted gate sparsity), reverse
pass, AdamW update. Everything is deterministic for a fixed
(seed, config, data) triple.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import GradientTape, stable_sigmoid
from .config import RunConfig
from .data import EncodedDataset
from .encoder import EncoderConfig
from .metrics import TaskMetrics, macro_auc
from .model import Model
from .objective import LossReport, bce_masked, l1_penalty, task_loss, total_loss
from .optim import AdamWConfig, AdamWState, adamw_step
from .splitting import SplitPlan, iterative_stratified_split

__all__ = [
    "TrainingError",
    "SweepRow",
    "build_model",
    "train",
    "evaluate",
    "mean_mask_value",
    "lambda_sweep",
]


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradients)."""


def build_model(config: RunConfig, vocab_size: int, task_names: list[str]) -> Model:
    encoder_config = EncoderConfig(
        vocab_size=vocab_size,
        hidden_dim=config.hidden_dim,
        n_layers=config.n_layers,
        n_heads=config.n_heads,
        ffn_dim=config.ffn_dim,
        max_len=config.max_len,
        dropout=config.dropout,
    )
    return Model.create(
        encoder_config,
        task_names,
        seed=config.seed,
        mask_hidden_dim=config.resolved_mask_hidden_dim(),
        mask_norm=config.mask_norm,
        pool_eps=config.pool_eps,
    )


def _pos_weights(data: EncodedDataset, rows: np.ndarray) -> list[float | None]:
    """Per-task negative/positive ratio over the labeled training entries."""
    weights: list[float | None] = []
    for k in range(len(data.task_names)):
        keep = data.labeled[rows, k].astype(bool)
        pos = float((data.labels[rows, k][keep] == 1).sum())
        neg = float(keep.sum()) - pos
        weights.append(neg / pos if pos > 0 else None)
    return weights


def _batch_objective(
    model: Model,
    data: EncodedDataset,
    rows: np.ndarray,
    config: RunConfig,
    training: bool,
    rng: np.random.Generator | None,
    pos_weights: list[float | None] | None = None,
):
    """Forward one batch; returns (loss tensor, LossReport)."""
    ids = data.ids[rows]
    valid = data.valid_mask[rows]
    content = Model.content_mask(ids, valid)
    _, outputs = model.forward(ids, valid, training=training, rng=rng)
    per_task, pred_vals, reg_vals, combined_vals, counts = [], [], [], [], []
    for k, out in enumerate(outputs):
        y = data.labels[rows, k]
        labeled = data.labeled[rows, k]
        pw = pos_weights[k] if pos_weights else None
        pred = bce_masked(out.logit, y, labeled, pos_weight=pw)
        reg = l1_penalty(out.mask, content, labeled,
                         normalize_by_length=config.l1_normalize_by_length)
        combined = task_loss(pred, reg, config.lam)
        per_task.append(combined)
        pred_vals.append(float(pred.data))
        reg_vals.append(float(reg.data))
        combined_vals.append(float(combined.data))
        counts.append(int(labeled.sum()))
    loss = total_loss(per_task)
    report = LossReport(
        total=float(loss.data),
        lam=config.lam,
        task_names=list(data.task_names),
        pred=pred_vals,
        sparsity=reg_vals,
        combined=combined_vals,
        labeled=counts,
    )
    return loss, report


def _epoch_mean(reports: list[LossReport]) -> LossReport:
    n = len(reports)
    first = reports[0]
    k = len(first.task_names)
    return LossReport(
        total=sum(r.total for r in reports) / n,
        lam=first.lam,
        task_names=list(first.task_names),
        pred=[sum(r.pred[i] for r in reports) / n for i in range(k)],
        sparsity=[sum(r.sparsity[i] for r in reports) / n for i in range(k)],
        combined=[sum(r.combined[i] for r in reports) / n for i in range(k)],
        labeled=[sum(r.labeled[i] for r in reports) for i in range(k)],
    )


def train(
    model: Model,
    data: EncodedDataset,
    split: SplitPlan,
    config: RunConfig,
    on_epoch=None,
) -> list[LossReport]:
    """Optimize in place; returns per-epoch mean loss reports.

    ``on_epoch`` (epoch index, LossReport) fires after each epoch, for
    metric logging.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])
    trainable = model.trainable_params(freeze_backbone=config.freeze_backbone)
    state = AdamWState.for_params(trainable)
    adamw = AdamWConfig(
        lr=config.lr,
        weight_decay=config.weight_decay,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    train_rows = np.asarray(split.train_idx, dtype=np.int64)
    pos_weights = _pos_weights(data, train_rows) if config.pos_weight else None

    history: list[LossReport] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_rows))
        reports = []
        for start in range(0, len(train_rows), config.batch_size):
            rows = train_rows[order[start : start + config.batch_size]]
            with GradientTape() as tape:
                for p in trainable.values():
                    tape.watch(p)
                loss, report = _batch_objective(
                    model, data, rows, config,
                    training=True, rng=dropout_rng, pos_weights=pos_weights,
                )
            if not np.isfinite(report.total):
                bad = next(
                    (name for name, v in zip(report.task_names, report.combined)
                     if not np.isfinite(v)),
                    report.task_names[0],
                )
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}, "
                    f"task {bad!r}"
                )
            grads = tape.gradient(loss, trainable)
            adamw_step(trainable, grads, state, adamw)
            reports.append(report)
        epoch_report = _epoch_mean(reports)
        history.append(epoch_report)
        if on_epoch is not None:
            on_epoch(epoch, epoch_report)
    return history


def predict_proba(
    model: Model, data: EncodedDataset, rows, batch_size: int = 64
) -> np.ndarray:
    """Eval-mode probabilities [len(rows), K], batched for memory comfort."""
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty((len(rows), model.n_tasks))
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        out[start : start + len(chunk)] = model.predict_proba(
            data.ids[chunk], data.valid_mask[chunk]
        )
    return out


def evaluate(model: Model, data: EncodedDataset, rows) -> TaskMetrics:
    """Macro and per-task AUC on the given rows, honoring missing labels."""
    rows = np.asarray(rows, dtype=np.int64)
    scores = predict_proba(model, data, rows)
    return macro_auc(
        scores, data.labels[rows], data.labeled[rows], task_names=data.task_names
    )


def mean_mask_value(
    model: Model, data: EncodedDataset, rows, batch_size: int = 64
) -> np.ndarray:
    """Per-task mean gate value over gated molecule tokens of the rows."""
    rows = np.asarray(rows, dtype=np.int64)
    sums = np.zeros(model.n_tasks)
    count = 0.0
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        ids, valid = data.ids[chunk], data.valid_mask[chunk]
        content = Model.content_mask(ids, valid)
        _, outputs = model.forward(ids, valid, training=False)
        for k, out in enumerate(outputs):
            sums[k] += float((out.mask.data * content).sum())
        count += float(content.sum())
    return sums / count


@dataclass
class SweepRow:
    lam: float
    macro_auc: float
    mean_mask: float
    delta_pct: float | None   # vs the lam=0 row; None when that row is absent

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "macro_auc": self.macro_auc,
            "mean_mask": self.mean_mask,
            "delta_pct": self.delta_pct,
        }


def lambda_sweep(
    data: EncodedDataset,
    vocab_size: int,
    config: RunConfig,
    lambdas: list[float],
    split: SplitPlan | None = None,
) -> list[SweepRow]:
    """Train one model per sparsity weight on a shared split.

    Rows report (lambda, held-out macro AUC, mean held-out gate value,
    AUC delta% against the lambda=0 row when present). Each run reuses the
    same seed so lambda is the only variable.
    """
    if not lambdas:
        raise ValueError("at least one lambda value is required")
    if split is None:
        split = iterative_stratified_split(
            data.labels, data.labeled, config.test_fraction, config.seed
        )
    results = []
    for lam in lambdas:
        run_config = replace(config, lam=lam)
        model = build_model(run_config, vocab_size, data.task_names)
        train(model, data, split, run_config)
        metrics = evaluate(model, data, split.test_idx)
        mask = float(mean_mask_value(model, data, split.test_idx).mean())
        results.append((lam, metrics.macro, mask))
    baseline = next((auc for lam, auc, _ in results if lam == 0.0), None)
    rows = []
    for lam, auc, mask in results:
        delta = None
        if baseline is not None:
            delta = 0.0 if lam == 0.0 else (auc - baseline) / baseline * 100.0
        rows.append(SweepRow(lam=lam, macro_auc=auc, mean_mask=mask, delta_pct=delta))
    return rows
