"""Iterative stratification for multi-label train/test and k-fold splits.

Strata are (task, label value) pairs over observed labels. The scarcest
stratum is settled first: each of its unassigned examples goes to the
subset with the greatest unmet demand for that stratum, breaking ties by
smaller current subset size and then by seeded randomness. Examples with
no observed labels at all are distributed at the end by overall size
demand. Deterministic for a fixed seed.

Greedy assignment is myopic: settling early strata can strand a later
task with all of its positives on one side. When the test-subset space is
small enough to enumerate (a few thousand candidates), the two-way split
therefore switches to an exact search that minimizes the worst per-task
positive-rate gap; k-fold assignment always uses the greedy pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = ["SplitPlan", "iterative_stratified_split", "kfold"]

_EXACT_SEARCH_LIMIT = 10_000


@dataclass
class SplitPlan:
    train_idx: list[int]
    test_idx: list[int]
    fold_of: list[int] | None = None   # per-row fold id for k-fold plans

    def to_dict(self) -> dict:
        out = {"train": self.train_idx, "test": self.test_idx}
        if self.fold_of is not None:
            out["fold_of"] = self.fold_of
        return out


def _greedy_assign(
    labels: np.ndarray,
    labeled: np.ndarray,
    fractions: list[float],
    rng: np.random.Generator,
) -> np.ndarray:
    """Assign each row to one of len(fractions) subsets; returns that index."""
    labels = np.asarray(labels)
    labeled = np.asarray(labeled).astype(bool)
    n_rows, n_tasks = labels.shape
    n_subsets = len(fractions)

    # Remaining unassigned members of each (task, value) stratum.
    members: dict[tuple[int, int], set[int]] = {}
    for k in range(n_tasks):
        for v in (0, 1):
            rows = set(np.flatnonzero(labeled[:, k] & (labels[:, k] == v)).tolist())
            if rows:
                members[(k, v)] = rows

    demand = {
        stratum: [fractions[s] * len(rows) for s in range(n_subsets)]
        for stratum, rows in members.items()
    }
    overall_demand = [fractions[s] * n_rows for s in range(n_subsets)]
    sizes = [0] * n_subsets
    assignment = np.full(n_rows, -1, dtype=np.int64)

    def strata_of(row: int) -> list[tuple[int, int]]:
        return [
            (k, int(labels[row, k]))
            for k in range(n_tasks)
            if labeled[row, k]
        ]

    def place(row: int, subset: int) -> None:
        assignment[row] = subset
        sizes[subset] += 1
        overall_demand[subset] -= 1.0
        for stratum in strata_of(row):
            members[stratum].discard(row)
            demand[stratum][subset] -= 1.0

    def pick_subset(weights: list[float]) -> int:
        best = max(weights)
        candidates = [s for s in range(n_subsets) if weights[s] == best]
        if len(candidates) > 1:
            smallest = min(sizes[s] for s in candidates)
            candidates = [s for s in candidates if sizes[s] == smallest]
        if len(candidates) > 1:
            return int(rng.choice(candidates))
        return candidates[0]

    while True:
        live = {s: rows for s, rows in members.items() if rows}
        if not live:
            break
        # Scarcest stratum first; lexicographic stratum id keeps ties stable.
        stratum = min(live, key=lambda s: (len(live[s]), s))
        rows = sorted(live[stratum])
        rng.shuffle(rows)
        for row in rows:
            if assignment[row] >= 0:
                continue
            place(row, pick_subset(demand[stratum]))

    leftover = np.flatnonzero(assignment < 0).tolist()
    rng.shuffle(leftover)
    for row in leftover:
        place(row, pick_subset(overall_demand))
    return assignment


def _worst_gap(labels: np.ndarray, labeled: np.ndarray, test_mask: np.ndarray) -> float:
    """Max per-task |pos-rate(train) - pos-rate(test)| over observed labels.

    A task with observed labels that ends up with an empty train or test
    side scores 1.0 — the split is useless for evaluating that task.
    """
    worst = 0.0
    for k in range(labels.shape[1]):
        observed = labeled[:, k] != 0
        if not observed.any():
            continue
        train_k = observed & ~test_mask
        test_k = observed & test_mask
        if not train_k.any() or not test_k.any():
            return 1.0
        gap = abs(labels[train_k, k].mean() - labels[test_k, k].mean())
        worst = max(worst, gap)
    return worst


def _exact_split(
    labels: np.ndarray, labeled: np.ndarray, n_test: int
) -> tuple[list[int], list[int]] | None:
    """Minimax-gap test subset by enumeration, or None when infeasible.

    Only attempted while the candidate count stays small; ties go to the
    lexicographically first subset, so the result is seed-independent.
    """
    n_rows = labels.shape[0]
    if math.comb(n_rows, n_test) > _EXACT_SEARCH_LIMIT:
        return None
    best_gap = np.inf
    best: tuple[int, ...] | None = None
    test_mask = np.zeros(n_rows, dtype=bool)
    for combo in combinations(range(n_rows), n_test):
        test_mask[:] = False
        test_mask[list(combo)] = True
        gap = _worst_gap(labels, labeled, test_mask)
        if gap < best_gap - 1e-12:
            best_gap = gap
            best = combo
    assert best is not None
    train = [row for row in range(n_rows) if row not in set(best)]
    return train, list(best)


def _resize_to(
    labels: np.ndarray,
    labeled: np.ndarray,
    test_mask: np.ndarray,
    n_test: int,
) -> np.ndarray:
    """Move rows between sides until the test side holds exactly n_test rows.

    Each move transfers the row that least worsens the worst per-task
    positive-rate gap; ties resolve by scan order, so the result is
    deterministic given the starting assignment.
    """
    labels = np.asarray(labels, dtype=np.float64)
    lab = np.asarray(labeled) != 0
    pos = labels * lab
    has_obs = lab.any(axis=0)
    test_mask = test_mask.copy()
    while int(test_mask.sum()) != n_test:
        shrink = test_mask.sum() > n_test
        rows = np.flatnonzero(test_mask if shrink else ~test_mask)
        n_te = lab[test_mask].sum(axis=0).astype(np.float64)
        n_tr = lab[~test_mask].sum(axis=0).astype(np.float64)
        p_te = pos[test_mask].sum(axis=0)
        p_tr = pos[~test_mask].sum(axis=0)
        sign = -1.0 if shrink else 1.0
        cn_te = n_te + sign * lab[rows]
        cn_tr = n_tr - sign * lab[rows]
        cp_te = p_te + sign * pos[rows]
        cp_tr = p_tr - sign * pos[rows]
        with np.errstate(invalid="ignore", divide="ignore"):
            gap = np.abs(cp_tr / cn_tr - cp_te / cn_te)
        gap = np.where((cn_tr > 0) & (cn_te > 0), gap,
                       np.where(has_obs, 1.0, 0.0))
        pick = int(rows[np.argmin(gap.max(axis=1) + 1e-9 * gap.mean(axis=1))])
        test_mask[pick] = not shrink
    return test_mask


def _refine_split(
    labels: np.ndarray,
    labeled: np.ndarray,
    test_mask: np.ndarray,
    max_rounds: int = 40,
) -> np.ndarray:
    """Improve a two-way split by steepest-descent train/test row swaps.

    Each round evaluates every (train row, test row) exchange and applies the
    one that most reduces (worst per-task gap, mean gap); stops at a local
    optimum. Subset sizes are preserved and the scan order is fixed, so the
    result is a deterministic function of the starting assignment.
    """
    labels = np.asarray(labels, dtype=np.float64)
    lab = np.asarray(labeled) != 0
    pos = labels * lab
    n_tasks = labels.shape[1]
    has_obs = lab.any(axis=0)

    def objective(mask):
        n_te = lab[mask].sum(axis=0).astype(np.float64)
        n_tr = lab[~mask].sum(axis=0).astype(np.float64)
        p_te = pos[mask].sum(axis=0)
        p_tr = pos[~mask].sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            gap = np.abs(p_tr / n_tr - p_te / n_te)
        gap = np.where((n_tr > 0) & (n_te > 0), gap, np.where(has_obs, 1.0, 0.0))
        return gap.max(), gap.mean()

    test_mask = test_mask.copy()
    best = objective(test_mask)
    for _ in range(max_rounds):
        train_rows = np.flatnonzero(~test_mask)
        test_rows = np.flatnonzero(test_mask)
        n_tr = lab[train_rows].sum(axis=0).astype(np.float64)
        n_te = lab[test_rows].sum(axis=0).astype(np.float64)
        p_tr = pos[train_rows].sum(axis=0)
        p_te = pos[test_rows].sum(axis=0)
        found = None
        # Candidate stats for swapping train row i with test row j, chunked
        # over train rows to bound the [chunk, test, task] workspace.
        chunk = max(1, 2_000_000 // max(1, len(test_rows) * n_tasks))
        for start in range(0, len(train_rows), chunk):
            rows_i = train_rows[start:start + chunk]
            di = lab[rows_i][:, None, :]
            dj = lab[test_rows][None, :, :]
            qi = pos[rows_i][:, None, :]
            qj = pos[test_rows][None, :, :]
            cn_tr = n_tr - di + dj
            cn_te = n_te + di - dj
            cp_tr = p_tr - qi + qj
            cp_te = p_te + qi - qj
            with np.errstate(invalid="ignore", divide="ignore"):
                gap = np.abs(cp_tr / cn_tr - cp_te / cn_te)
            gap = np.where((cn_tr > 0) & (cn_te > 0), gap,
                           np.where(has_obs, 1.0, 0.0))
            worst = gap.max(axis=2)
            mean = gap.mean(axis=2)
            flat = np.argmin(worst + 1e-9 * mean)
            a, b = divmod(int(flat), len(test_rows))
            cand = (worst[a, b], mean[a, b])
            improves = cand[0] < best[0] - 1e-12 or (
                cand[0] < best[0] + 1e-12 and cand[1] < best[1] - 1e-12)
            if improves and (found is None or cand < found[0]):
                found = (cand, int(rows_i[a]), int(test_rows[b]))
        if found is None:
            break
        best, row_out, row_in = found
        test_mask[row_out] = True
        test_mask[row_in] = False
    return test_mask


def iterative_stratified_split(
    labels: np.ndarray,
    labeled: np.ndarray,
    test_fraction: float,
    seed: int,
) -> SplitPlan:
    """Two-way split preserving per-task positive rates as far as counts allow."""
    labels = np.asarray(labels)
    labeled_arr = np.asarray(labeled)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise ValueError("labels must be a non-empty [rows, tasks] matrix")
    if labeled_arr.shape != labels.shape:
        raise ValueError("labels and labeled mask must have the same shape")
    if labels.shape[0] < 2:
        raise ValueError("need at least 2 rows to split")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n_test = min(max(int(round(test_fraction * labels.shape[0])), 1),
                 labels.shape[0] - 1)
    if labeled_arr.sum() > 0:
        exact = _exact_split(labels, labeled_arr, n_test)
        if exact is not None:
            return SplitPlan(train_idx=exact[0], test_idx=exact[1])
    rng = np.random.default_rng(seed)
    assignment = _greedy_assign(
        labels, labeled_arr, [1.0 - test_fraction, test_fraction], rng
    )
    mask = _resize_to(labels, labeled_arr, assignment == 1, n_test)
    mask = _refine_split(labels, labeled_arr, mask)
    return SplitPlan(train_idx=np.flatnonzero(~mask).tolist(),
                     test_idx=np.flatnonzero(mask).tolist())


def kfold(
    labels: np.ndarray,
    labeled: np.ndarray,
    k: int,
    seed: int,
) -> list[SplitPlan]:
    """k stratified folds; plan i holds out fold i. Folds partition the rows."""
    labels = np.asarray(labels)
    labeled = np.asarray(labeled)
    if labels.ndim != 2 or labeled.shape != labels.shape:
        raise ValueError("labels and labeled mask must be same-shape matrices")
    if k < 2 or k > labels.shape[0]:
        raise ValueError(f"fold count {k} must be in [2, n_rows]")
    rng = np.random.default_rng(seed)
    assignment = _greedy_assign(labels, labeled, [1.0 / k] * k, rng)
    fold_of = assignment.tolist()
    plans = []
    for fold in range(k):
        test = np.flatnonzero(assignment == fold).tolist()
        train = np.flatnonzero(assignment != fold).tolist()
        if not test:
            raise ValueError(f"fold {fold} is empty; too few rows for k={k}")
        plans.append(SplitPlan(train_idx=train, test_idx=test, fold_of=fold_of))
    return plans
