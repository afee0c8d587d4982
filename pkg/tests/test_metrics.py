"""ROC-AUC against a brute-force pairwise oracle, plus the macro average."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from toxgate.metrics import macro_auc, roc_auc


def pairwise_auc(scores, labels):
    """O(P*Q) oracle: count winning and tied positive/negative pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        return None
    wins = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def _random_instance(rng):
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, size=n)
    scores = rng.normal(size=n)
    if rng.random() < 0.5:  # inject heavy ties by snapping to a coarse grid
        scores = np.round(scores * 2) / 2
    return scores, labels


def test_matches_pairwise_oracle_bit_exactly():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(500):
        scores, labels = _random_instance(rng)
        expected = pairwise_auc(scores, labels)
        actual = roc_auc(scores, labels)
        assert actual == expected  # same float, not merely close
        checked += expected is not None
    assert checked > 400


def test_hand_cases():
    assert roc_auc(np.array([0.9, 0.1]), np.array([1, 0])) == 1.0
    assert roc_auc(np.array([0.1, 0.9]), np.array([1, 0])) == 0.0
    assert roc_auc(np.array([0.8, 0.7, 0.6, 0.2]), np.array([1, 0, 1, 0])) == 0.75
    assert roc_auc(np.array([0.4, 0.4, 0.4]), np.array([1, 0, 1])) == 0.5


def test_single_class_is_undefined():
    assert roc_auc(np.array([0.2, 0.8]), np.array([1, 1])) is None
    assert roc_auc(np.array([0.2, 0.8]), np.array([0, 0])) is None
    assert roc_auc(np.array([0.5]), np.array([1]), np.array([0.0])) is None


def test_monotone_transform_invariance():
    rng = np.random.default_rng(11)
    for _ in range(50):
        scores, labels = _random_instance(rng)
        base = roc_auc(scores, labels)
        if base is None:
            continue
        assert roc_auc(3.0 * scores + 1.0, labels) == base
        assert roc_auc(np.tanh(scores), labels) == base


def test_complement_symmetry_without_ties():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = int(rng.integers(2, 120))
        scores = rng.permutation(n).astype(np.float64)  # distinct scores
        labels = rng.integers(0, 2, size=n)
        base = roc_auc(scores, labels)
        if base is None:
            continue
        assert base + roc_auc(-scores, labels) == 1.0


def test_unlabeled_entries_never_influence_the_result():
    rng = np.random.default_rng(17)
    scores = rng.normal(size=40)
    labels = rng.integers(0, 2, size=40)
    labeled = (rng.random(40) < 0.6).astype(np.float64)
    base = roc_auc(scores, labels, labeled)
    noisy_scores = np.where(labeled == 0, rng.normal(size=40) * 100, scores)
    noisy_labels = np.where(labeled == 0, 1 - labels, labels)
    assert roc_auc(noisy_scores, noisy_labels, labeled) == base


def test_rejects_nan_scores_and_bad_labels():
    with pytest.raises(ValueError):
        roc_auc(np.array([0.1, np.nan]), np.array([1, 0]))
    with pytest.raises(ValueError):
        roc_auc(np.array([0.1, 0.2]), np.array([1, 2]))


def test_macro_mean_and_skip_convention():
    scores = np.array([[0.9, 0.2], [0.1, 0.7], [0.8, 0.4], [0.3, 0.6]])
    labels = np.array([[1, 1], [0, 1], [1, 0], [0, 0]])
    report = macro_auc(scores, labels, task_names=["a", "b"])
    assert report.per_task == [1.0, pairwise_auc(scores[:, 1], labels[:, 1])]
    assert_allclose(report.macro, np.mean(report.per_task))
    assert report.n_undefined == 0

    one_sided = labels.copy()
    one_sided[:, 1] = 1  # second task single-class -> skipped
    report = macro_auc(scores, one_sided, task_names=["a", "b"])
    assert report.per_task[1] is None
    assert report.macro == report.per_task[0]
    assert report.n_undefined == 1


def test_macro_single_task_identity_and_all_undefined():
    scores = np.array([[0.9], [0.1]])
    labels = np.array([[1], [0]])
    assert macro_auc(scores, labels).macro == 1.0
    with pytest.raises(ValueError):
        macro_auc(scores, np.array([[1], [1]]))


def test_macro_report_serializes():
    scores = np.array([[0.9, 0.2], [0.1, 0.7]])
    labels = np.array([[1, 0], [0, 1]])
    blob = macro_auc(scores, labels, task_names=["tox", "ames"]).to_dict()
    assert blob["macro_auc"] == 1.0
    assert [row["task"] for row in blob["tasks"]] == ["tox", "ames"]
