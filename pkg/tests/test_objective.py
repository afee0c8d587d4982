"""Tests for the composite objective: masked BCE, gate sparsity penalty,
per-task combination, and the loss report container."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from toxgate.autodiff import GradientTape, Tensor, grad_check, matmul, reshape, sigmoid
from toxgate.objective import LossReport, bce_masked, l1_penalty, task_loss, total_loss

# ln(2): BCE of a zero logit against either label value.
LN_2 = 0.69314718055994531
# log(1 + exp(-5)): BCE of logit 5 against label 1, evaluated in high
# precision and frozen.
LOG1P_EXP_NEG5 = 0.0067153484891180686


# ---------------------------------------------------------------------------
# masked BCE
# ---------------------------------------------------------------------------


def test_bce_zero_logits_give_ln2():
    logits = Tensor(np.zeros(2))
    loss = bce_masked(logits, np.array([1.0, 0.0]), np.ones(2))
    assert loss.data.shape == ()
    assert_allclose(loss.data, LN_2, atol=1e-15, rtol=0)


def test_bce_ignores_unlabeled_entries():
    # Only the first entry is labeled; the wild second logit must not leak.
    logits = Tensor(np.array([5.0, -999.0]))
    loss = bce_masked(logits, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert_allclose(loss.data, LOG1P_EXP_NEG5, atol=1e-16, rtol=0)


def test_bce_nothing_labeled_is_exactly_zero():
    logits = Tensor(np.array([3.0, -2.0]))
    loss = bce_masked(logits, np.array([1.0, 1.0]), np.zeros(2))
    assert loss.data.shape == ()
    assert loss.data == 0.0


def test_bce_extreme_logits_stay_finite():
    with np.errstate(over="raise", invalid="raise"):
        confident = bce_masked(
            Tensor(np.array([1000.0, -1000.0])),
            np.array([1.0, 0.0]),
            np.ones(2),
        )
        assert confident.data == 0.0
        wrong = bce_masked(Tensor(np.array([1e4])), np.array([0.0]), np.ones(1))
        assert wrong.data == 1e4
        wrong_neg = bce_masked(Tensor(np.array([-1e4])), np.array([1.0]), np.ones(1))
        assert wrong_neg.data == 1e4


def test_bce_rejects_non_binary_labeled_targets():
    logits = Tensor(np.zeros(3))
    with pytest.raises(ValueError, match="not 0 or 1") as excinfo:
        bce_masked(logits, np.array([0.0, 2.0, 1.0]), np.ones(3))
    assert "(1,)" in str(excinfo.value)
    # the same bad value is ignored when unlabeled
    loss = bce_masked(logits, np.array([0.0, 2.0, 1.0]), np.array([1.0, 0.0, 1.0]))
    assert np.isfinite(loss.data)


def test_bce_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        bce_masked(Tensor(np.zeros(3)), np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        bce_masked(Tensor(np.zeros(3)), np.zeros(3), np.ones(4))


def test_bce_pos_weight_scales_positive_terms():
    logits = Tensor(np.zeros(2))
    y = np.array([1.0, 0.0])
    weighted = bce_masked(logits, y, np.ones(2), pos_weight=3.0)
    # weights [3, 1] on equal ln2 terms, normalized by 2 labels -> 2 ln2
    assert_allclose(weighted.data, 2.0 * LN_2, atol=1e-15, rtol=0)
    neutral = bce_masked(logits, y, np.ones(2), pos_weight=1.0)
    plain = bce_masked(logits, y, np.ones(2))
    assert np.array_equal(neutral.data, plain.data)


def test_bce_unlabeled_entries_are_opaque_bitwise():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 6)))
        raw = rng.normal(size=shape)
        labeled = (rng.random(shape) < 0.6).astype(np.float64)
        y = rng.integers(0, 2, size=shape).astype(np.float64)
        y_scrambled = np.where(labeled == 1, y, rng.integers(0, 2, size=shape))

        def run(targets):
            logits = Tensor(raw.copy())
            with GradientTape() as tape:
                tape.watch(logits)
                loss = bce_masked(logits, targets, labeled)
            if labeled.sum() == 0:
                return loss.data, np.zeros_like(raw)
            return loss.data, tape.gradient(loss, {"x": logits})["x"]

        loss_a, grad_a = run(y)
        loss_b, grad_b = run(y_scrambled)
        assert np.array_equal(loss_a, loss_b)
        assert np.array_equal(grad_a, grad_b)
        assert np.all(grad_a[labeled == 0] == 0.0)


# ---------------------------------------------------------------------------
# sparsity penalty
# ---------------------------------------------------------------------------


def test_l1_hand_value_uniform_gates():
    mask = Tensor(np.full((1, 4), 0.5))
    out = l1_penalty(mask, np.ones((1, 4)), np.ones(1))
    assert out.data == 2.0


def test_l1_weights_by_label_indicator():
    # Per-molecule gate totals are 3 and 7; only the first is labeled.
    mask = Tensor(np.array([[0.75, 0.75, 0.75, 0.75], [3.0, 2.0, 1.0, 1.0]]))
    out = l1_penalty(mask, np.ones((2, 4)), np.array([1.0, 0.0]))
    assert out.data == 3.0
    both = l1_penalty(mask, np.ones((2, 4)), np.ones(2))
    assert both.data == 5.0


def test_l1_normalize_by_length():
    mask = Tensor(np.array([[0.75, 0.75, 0.75, 0.75], [3.0, 2.0, 1.0, 1.0]]))
    out = l1_penalty(mask, np.ones((2, 4)), np.array([1.0, 0.0]),
                     normalize_by_length=True)
    assert out.data == 0.75


def test_l1_excludes_pad_positions():
    mask = Tensor(np.array([[0.5, 0.5, 0.9, 0.9]]))
    valid = np.array([[1.0, 1.0, 0.0, 0.0]])
    out = l1_penalty(mask, valid, np.ones(1))
    assert out.data == 1.0
    normalized = l1_penalty(mask, valid, np.ones(1), normalize_by_length=True)
    assert normalized.data == 0.5


def test_l1_rejects_negative_gates():
    mask = Tensor(np.array([[0.5, -0.1]]))
    with pytest.raises(ValueError):
        l1_penalty(mask, np.ones((1, 2)), np.ones(1))


def test_l1_nothing_labeled_is_zero():
    mask = Tensor(np.full((2, 3), 0.4))
    out = l1_penalty(mask, np.ones((2, 3)), np.zeros(2))
    assert out.data == 0.0


# ---------------------------------------------------------------------------
# combination
# ---------------------------------------------------------------------------


def test_task_loss_values_and_purity():
    assert task_loss(Tensor(1.0), Tensor(2.0), 0.0).data == 1.0
    assert_allclose(task_loss(Tensor(1.0), Tensor(2.0), 1e-3).data,
                    1.002, atol=1e-15, rtol=0)
    with pytest.raises(ValueError):
        task_loss(Tensor(1.0), Tensor(2.0), -1e-6)


def test_task_loss_strictly_monotone_in_lambda():
    values = [task_loss(Tensor(0.5), Tensor(1.3), lam).data
              for lam in (0.0, 1e-4, 1e-3, 1e-2)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_total_loss_values():
    assert total_loss([Tensor(1.0), Tensor(3.0)]).data == 2.0
    assert_allclose(total_loss([Tensor(0.7), Tensor(0.0), Tensor(1.1)]).data,
                    0.6, atol=1e-15, rtol=0)
    single = total_loss([Tensor(1.375)])
    assert single.data == 1.375
    with pytest.raises(ValueError):
        total_loss([])


def test_full_objective_gradient_check():
    # Tiny end-to-end objective: gates from a one-layer network, logits from
    # a linear readout of the gate-weighted feature mean, plus the sparsity
    # term. Analytic gradients must match central differences.
    rng = np.random.default_rng(4)
    features = rng.normal(size=(3, 5, 4))
    valid = np.ones((3, 5))
    valid[2, 3:] = 0.0
    y = np.array([1.0, 0.0, 1.0])
    labeled = np.array([1.0, 1.0, 0.0])
    params = {
        "wm": Tensor(rng.normal(scale=0.6, size=(4, 1))),
        "w": Tensor(rng.normal(scale=0.6, size=(4, 1))),
    }

    def objective():
        gate_logits = reshape(matmul(Tensor(features), params["wm"]), (3, 5))
        mask = sigmoid(gate_logits)
        mask = mask * Tensor(valid)
        pooled = reshape(
            matmul(reshape(mask, (3, 1, 5)), Tensor(features)), (3, 4)
        )
        logits = reshape(matmul(pooled, params["w"]), (3,))
        pred = bce_masked(logits, y, labeled)
        sparsity = l1_penalty(mask, valid, labeled)
        return task_loss(pred, sparsity, 1e-3)

    assert grad_check(objective, params) < 1e-4


# ---------------------------------------------------------------------------
# loss report
# ---------------------------------------------------------------------------


def test_loss_report_reconstruction_and_serialization():
    pred = [0.61, 0.42]
    sparsity = [2.0, 3.5]
    lam = 1e-3
    combined = [p + lam * s for p, s in zip(pred, sparsity)]
    report = LossReport(
        total=sum(combined) / 2,
        lam=lam,
        task_names=["tox_a", "tox_b"],
        pred=pred,
        sparsity=sparsity,
        combined=combined,
        labeled=[7, 5],
    )
    for i in range(2):
        assert_allclose(report.combined[i],
                        report.pred[i] + report.lam * report.sparsity[i],
                        atol=1e-12, rtol=0)
    assert_allclose(report.total, np.mean(report.combined), atol=1e-12, rtol=0)
    d = report.to_dict()
    assert d["lambda"] == lam
    assert d["total"] == report.total
    assert [t["task"] for t in d["tasks"]] == ["tox_a", "tox_b"]
    assert d["tasks"][1] == {
        "task": "tox_b",
        "loss": combined[1],
        "bce": pred[1],
        "l1": sparsity[1],
        "labeled": 5,
    }
