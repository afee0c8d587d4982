"""Tests for the training loop: determinism, freezing, loss descent, abort
diagnostics, batched prediction, and the sparsity-weight sweep."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from toxgate.config import RunConfig
from toxgate.data import DatasetTable, encode_dataset
from toxgate.splitting import iterative_stratified_split
from toxgate.synthetic import motif_dataset
from toxgate.tokenizer import build_vocab
from toxgate.training import (
    TrainingError,
    build_model,
    evaluate,
    lambda_sweep,
    mean_mask_value,
    predict_proba,
    train,
)


def make_dataset(n=48, seed=0, missing_rate=0.0):
    task_names, smiles, cells = motif_dataset(
        n, {"br": ("Br",)}, seed=seed, missing_rate=missing_rate
    )
    labels = np.array([[float(c) if c else 0.0 for c in row] for row in cells])
    labeled = np.array([[1.0 if c else 0.0 for c in row] for row in cells])
    table = DatasetTable(smiles, labels, labeled, task_names)
    vocab = build_vocab(smiles)
    return encode_dataset(table, vocab, 64), vocab


def lean_config(**overrides):
    base = dict(hidden_dim=16, n_layers=1, n_heads=2, ffn_dim=32, max_len=64,
                batch_size=16, epochs=2, lr=3e-3, seed=0)
    base.update(overrides)
    return RunConfig(**base)


def snapshot(model):
    return {name: p.data.copy() for name, p in model.params.items()}


def params_equal(a, b):
    return all(np.array_equal(a[name], b[name]) for name in a)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def test_zero_epochs_changes_nothing():
    data, vocab = make_dataset()
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config(epochs=0)
    model = build_model(config, len(vocab), data.task_names)
    before = snapshot(model)
    history = train(model, data, split, config)
    assert history == []
    assert params_equal(before, snapshot(model))


def test_training_is_bit_deterministic():
    data, vocab = make_dataset()
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config(epochs=2)

    def run(cfg):
        model = build_model(cfg, len(vocab), data.task_names)
        history = train(model, data, split, cfg)
        return snapshot(model), [h.total for h in history]

    params_a, totals_a = run(config)
    params_b, totals_b = run(config)
    assert params_equal(params_a, params_b)
    assert totals_a == totals_b
    params_c, totals_c = run(lean_config(epochs=2, seed=1))
    assert not params_equal(params_a, params_c)


def test_loss_decreases_over_first_five_epochs():
    data, vocab = make_dataset(n=120)
    split = iterative_stratified_split(data.labels, data.labeled, 0.2, seed=0)
    config = lean_config(epochs=5)
    model = build_model(config, len(vocab), data.task_names)
    history = train(model, data, split, config)
    totals = [h.total for h in history]
    assert len(totals) == 5
    assert all(later < earlier for earlier, later in zip(totals, totals[1:]))
    metrics = evaluate(model, data, split.train_idx)
    assert metrics.macro > 0.8


def test_on_epoch_callback_receives_history():
    data, vocab = make_dataset()
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config(epochs=3)
    model = build_model(config, len(vocab), data.task_names)
    seen = []
    history = train(model, data, split, config,
                    on_epoch=lambda epoch, report: seen.append((epoch, report)))
    assert [epoch for epoch, _ in seen] == [0, 1, 2]
    assert [report.total for _, report in seen] == [h.total for h in history]
    report = history[0]
    assert report.task_names == list(data.task_names)
    assert report.to_dict()["tasks"][0]["labeled"] > 0


def test_freeze_backbone_trains_heads_only():
    data, vocab = make_dataset()
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config(epochs=2, freeze_backbone=True)
    model = build_model(config, len(vocab), data.task_names)
    frozen_names = set(model.params) - set(
        model.trainable_params(freeze_backbone=True)
    )
    assert all(not n.startswith("heads.") for n in frozen_names)
    before = snapshot(model)
    train(model, data, split, config)
    after = snapshot(model)
    for name in frozen_names:
        assert np.array_equal(before[name], after[name]), name
    changed = [n for n in model.params
               if n.startswith("heads.") and not np.array_equal(before[n], after[n])]
    assert changed


def test_pos_weight_changes_the_fit():
    data, vocab = make_dataset(missing_rate=0.2)
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)

    def run(**overrides):
        config = lean_config(epochs=2, **overrides)
        model = build_model(config, len(vocab), data.task_names)
        train(model, data, split, config)
        return snapshot(model)

    plain = run()
    weighted = run(pos_weight=True)
    assert not params_equal(plain, weighted)


def test_non_finite_loss_aborts_with_diagnostic():
    data, vocab = make_dataset()
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config(epochs=2, lr=1e300)
    model = build_model(config, len(vocab), data.task_names)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingError, match=r"epoch 0.*task 'br'"):
            train(model, data, split, config)


# ---------------------------------------------------------------------------
# prediction and evaluation helpers
# ---------------------------------------------------------------------------


def test_predict_proba_is_batch_size_independent():
    data, vocab = make_dataset()
    config = lean_config()
    model = build_model(config, len(vocab), data.task_names)
    rows = np.arange(len(data))
    small = predict_proba(model, data, rows, batch_size=3)
    large = predict_proba(model, data, rows, batch_size=64)
    assert np.array_equal(small, large)
    assert small.shape == (len(data), 1)
    assert np.all((small > 0) & (small < 1))


def test_evaluate_reports_task_metrics():
    data, vocab = make_dataset(n=80)
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=0)
    config = lean_config()
    model = build_model(config, len(vocab), data.task_names)
    metrics = evaluate(model, data, split.test_idx)
    assert metrics.task_names == list(data.task_names)
    assert metrics.per_task[0] is not None
    assert 0.0 <= metrics.macro <= 1.0
    assert metrics.n_undefined == 0


def test_mean_mask_value_is_half_at_init():
    data, vocab = make_dataset()
    config = lean_config()
    model = build_model(config, len(vocab), data.task_names)
    values = mean_mask_value(model, data, np.arange(len(data)))
    assert values.shape == (1,)
    assert_allclose(values, 0.5, atol=1e-12, rtol=0)


# ---------------------------------------------------------------------------
# sparsity-weight sweep
# ---------------------------------------------------------------------------


def test_lambda_sweep_row_layout():
    data, vocab = make_dataset(n=40)
    config = lean_config(epochs=1)
    rows = lambda_sweep(data, len(vocab), config, [0.0, 1e-3])
    assert [r.lam for r in rows] == [0.0, 1e-3]
    assert rows[0].delta_pct == 0.0
    assert isinstance(rows[1].delta_pct, float)
    for row in rows:
        assert 0.0 <= row.macro_auc <= 1.0
        assert 0.0 <= row.mean_mask <= 1.0
        assert row.to_dict()["lambda"] == row.lam


def test_lambda_sweep_single_zero_row():
    data, vocab = make_dataset(n=40)
    config = lean_config(epochs=1)
    rows = lambda_sweep(data, len(vocab), config, [0.0])
    assert len(rows) == 1
    assert rows[0].delta_pct == 0.0


def test_lambda_sweep_without_baseline_has_no_delta():
    data, vocab = make_dataset(n=40)
    config = lean_config(epochs=1)
    rows = lambda_sweep(data, len(vocab), config, [1e-3])
    assert rows[0].delta_pct is None


def test_lambda_sweep_requires_values():
    data, vocab = make_dataset(n=40)
    with pytest.raises(ValueError):
        lambda_sweep(data, len(vocab), lean_config(), [])


def test_lambda_sweep_uses_shared_split_and_seed():
    data, vocab = make_dataset(n=40)
    config = lean_config(epochs=1)
    split = iterative_stratified_split(data.labels, data.labeled, 0.25, seed=3)
    a = lambda_sweep(data, len(vocab), config, [0.0, 1e-2], split=split)
    b = lambda_sweep(data, len(vocab), config, [0.0, 1e-2], split=split)
    assert [(r.lam, r.macro_auc, r.mean_mask) for r in a] == \
        [(r.lam, r.macro_auc, r.mean_mask) for r in b]
