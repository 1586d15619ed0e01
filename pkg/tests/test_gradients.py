"""Analytic gradients against the central finite-difference oracle."""

import dataclasses

import numpy as np
import pytest

from fuserank.model import backward_batch, batch_objective, encode_dataset, forward_batch
from fuserank.train import GRADCHECK_CFG, Model, grad_check, gradcheck_dataset


def _model_and_batch(cfg, seed=0):
    dataset = gradcheck_dataset(seed)
    enc = encode_dataset(dataset, cfg)
    rng = np.random.default_rng(seed + 1)
    model = Model.init(cfg, dataset.schema, rng)
    rows = rng.permutation(enc.n)[:cfg.batch_size]
    return model, enc, rows


@pytest.mark.parametrize("gate", ["att", "sen", "none"])
def test_gradcheck_passes_per_gate(gate):
    cfg = dataclasses.replace(GRADCHECK_CFG, gate=gate,
                              expert_count=1 if gate == "none" else 2)
    report = grad_check(cfg, seed=0)
    assert report["max_rel_err"] <= 1e-4, report


def test_gradcheck_without_crosses():
    cfg = dataclasses.replace(GRADCHECK_CFG, cross_layers=0)
    report = grad_check(cfg, seed=1)
    assert report["max_rel_err"] <= 1e-4, report


def test_gradcheck_reports_every_parameter_group():
    report = grad_check(GRADCHECK_CFG, seed=0)
    model, _, _ = _model_and_batch(GRADCHECK_CFG)
    assert set(report["per_group"]) == set(model.params)
    assert report["worst_group"] in report["per_group"]


def test_matched_label_zeroes_output_bias_gradient():
    """With y set exactly to the prediction, d(loss)/d(logit) vanishes."""
    model, enc, rows = _model_and_batch(GRADCHECK_CFG)
    prob, trace = forward_batch(model, enc, rows)
    enc.label[trace["rows"]] = prob  # continuous targets are fine for BCE
    grads = backward_batch(model, enc, trace)
    assert np.all(grads["out/b"] == 0.0)
    assert np.all(grads["out/W"] == 0.0)


def test_matched_label_leaves_pure_l2_on_touched_rows():
    model, enc, rows = _model_and_batch(GRADCHECK_CFG)
    prob, trace = forward_batch(model, enc, rows)
    enc.label[trace["rows"]] = prob
    grads = backward_batch(model, enc, trace)
    lam = model.cfg.l2_lambda
    touched = np.unique(trace["idx"][trace["msk"].astype(bool)])
    assert touched.size > 0
    for r in touched:
        np.testing.assert_array_equal(grads["emb/interest"][r],
                                      2.0 * lam * model.params["emb/interest"][r])


def test_untouched_embedding_rows_have_zero_gradient():
    model, enc, rows = _model_and_batch(GRADCHECK_CFG)
    _, _, trace = batch_objective(model, enc, rows)
    grads = backward_batch(model, enc, trace)
    touched = set(np.unique(trace["idx"][trace["msk"].astype(bool)]).tolist())
    table = grads["emb/interest"]
    untouched = [r for r in range(table.shape[0]) if r not in touched]
    assert untouched, "gradcheck dataset should leave some interest rows unused"
    for r in untouched:
        assert np.all(table[r] == 0.0)


def test_l2_increases_objective_for_nonzero_embeddings():
    cfg_l2 = GRADCHECK_CFG
    cfg_no = dataclasses.replace(GRADCHECK_CFG, l2_lambda=0.0)
    model, enc, rows = _model_and_batch(cfg_l2)
    with_l2, _, _ = batch_objective(model, enc, rows)
    model.cfg = cfg_no
    without, _, _ = batch_objective(model, enc, rows)
    assert with_l2 > without


def test_backward_is_deterministic():
    model, enc, rows = _model_and_batch(GRADCHECK_CFG)
    _, _, trace = batch_objective(model, enc, rows)
    g1 = backward_batch(model, enc, trace)
    g2 = backward_batch(model, enc, trace)
    for key in g1:
        assert np.array_equal(g1[key], g2[key])
