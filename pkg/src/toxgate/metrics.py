"""ROC-AUC via the rank statistic, with missing labels and macro averaging.

A task's AUC is the probability that a random positive scores above a
random negative, counting ties as half. Tasks with a single class among
their labeled entries are undefined (None), never defaulted to 0.5; the
macro average skips them and reports how many were skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TaskMetrics", "roc_auc", "macro_auc"]


@dataclass
class TaskMetrics:
    task_names: list[str]
    per_task: list[float | None]
    labeled: list[int] = field(default_factory=list)
    positives: list[int] = field(default_factory=list)
    macro: float = float("nan")
    n_undefined: int = 0

    def to_dict(self) -> dict:
        return {
            "macro_auc": self.macro,
            "n_undefined": self.n_undefined,
            "tasks": [
                {
                    "task": name,
                    "auc": self.per_task[i],
                    "labeled": self.labeled[i],
                    "positives": self.positives[i],
                }
                for i, name in enumerate(self.task_names)
            ],
        }


def roc_auc(
    scores: np.ndarray,
    labels: np.ndarray,
    labeled: np.ndarray | None = None,
) -> float | None:
    """Tie-aware AUC over labeled entries; None when only one class present.

    Sorting replaces the quadratic pair scan, but wins and ties are exact
    integer counts, so the result equals the brute-force pair statistic
    (wins + 0.5 * ties) / (P * Q) bit for bit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labeled is not None:
        keep = np.asarray(labeled, dtype=bool)
        scores, labels = scores[keep], labels[keep]
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")
    pos_total = int((labels == 1).sum())
    neg_total = int((labels == 0).sum())
    if pos_total == 0 or neg_total == 0:
        return None

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    wins = 0
    ties = 0
    negatives_below = 0
    i = 0
    n = len(sorted_scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        group_pos = int((sorted_labels[i:j] == 1).sum())
        group_neg = (j - i) - group_pos
        wins += group_pos * negatives_below
        ties += group_pos * group_neg
        negatives_below += group_neg
        i = j
    return (wins + 0.5 * ties) / (pos_total * neg_total)


def macro_auc(
    scores: np.ndarray,
    labels: np.ndarray,
    labeled: np.ndarray | None = None,
    task_names: list[str] | None = None,
) -> TaskMetrics:
    """Per-task AUC columns plus their mean over defined tasks.

    ``scores``/``labels``/``labeled`` are [N, K]; raises when every task is
    undefined.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_tasks = scores.shape[1]
    if labeled is None:
        labeled = np.ones_like(scores)
    labeled = np.asarray(labeled)
    if task_names is None:
        task_names = [f"task{k}" for k in range(n_tasks)]

    per_task: list[float | None] = []
    counts, positives = [], []
    for k in range(n_tasks):
        keep = labeled[:, k].astype(bool)
        per_task.append(roc_auc(scores[:, k], labels[:, k], labeled[:, k]))
        counts.append(int(keep.sum()))
        positives.append(int((labels[keep, k] == 1).sum()))
    defined = [a for a in per_task if a is not None]
    if not defined:
        raise ValueError("AUC is undefined for every task")
    return TaskMetrics(
        task_names=list(task_names),
        per_task=per_task,
        labeled=counts,
        positives=positives,
        macro=float(np.mean(defined)),
        n_undefined=len(per_task) - len(defined),
    )
