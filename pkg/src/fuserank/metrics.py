"""Ranking evaluation: AUC, mean BCE, gate-weight reports, cosine tables."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import Model, bce_loss, forward_batch

logger = logging.getLogger(__name__)

EVAL_CHUNK = 4096


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) formulation.

    Tied scores contribute half a win per tied positive-negative pair,
    implemented with average ranks.  Requires both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: need at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(scores):
    n = scores.size
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    avg = (starts + 1 + ends) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


@dataclass
class EvalReport:
    n: int
    n_pos: int
    n_neg: int
    auc: float | None
    mean_bce: float
    modalities: list
    modality_weights: dict       # {"overall": [...], "by_cohort": {name: [...]}}
    expert_gate_weights: list

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "auc": self.auc,
            "mean_bce": self.mean_bce,
            "modalities": list(self.modalities),
            "modality_weights": self.modality_weights,
            "expert_gate_weights": self.expert_gate_weights,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(model: Model, dataset, enc=None) -> EvalReport:
    """Score every interaction and aggregate metrics plus gate statistics.

    Mean BCE here is the pure per-interaction loss (no L2 term).  A test
    set with a single class keeps its BCE but reports auc as None.
    """
    from .model import encode_dataset

    if enc is None:
        enc = encode_dataset(dataset, model.cfg)
    n = enc.n
    if n == 0:
        raise DataError("no interactions to evaluate")
    j = len(model.cfg.modalities)
    k_n = model.cfg.active_experts
    scores = np.empty(n)
    bces = np.empty(n)
    mod_w = np.empty((n, j))
    gate_w = np.empty((n, k_n))
    for start in range(0, n, EVAL_CHUNK):
        rows = np.arange(start, min(start + EVAL_CHUNK, n))
        prob, trace = forward_batch(model, enc, rows)
        scores[rows] = prob
        bces[rows] = bce_loss(prob, enc.label[rows])
        gamma = trace["gamma"]
        eff = np.zeros((rows.size, j))
        for k in range(k_n):
            eff += gamma[:, k:k + 1] * trace["att_w"][k]
        mod_w[rows] = eff
        gate_w[rows] = gamma

    labels = enc.label.astype(int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    auc_val = None
    if n_pos > 0 and n_neg > 0:
        auc_val = auc(scores, labels)
    else:
        logger.warning("AUC undefined: evaluation set has a single class")

    cohort_of = _user_cohorts(dataset)
    by_cohort = {}
    if cohort_of is not None:
        sample_cohort = cohort_of[enc.user]
        for name in sorted(set(sample_cohort.tolist())):
            sel = sample_cohort == name
            by_cohort[name] = [float(x) for x in mod_w[sel].mean(axis=0)]
    return EvalReport(
        n=n,
        n_pos=n_pos,
        n_neg=n_neg,
        auc=auc_val,
        mean_bce=float(bces.mean()),
        modalities=list(model.cfg.modalities),
        modality_weights={
            "overall": [float(x) for x in mod_w.mean(axis=0)],
            "by_cohort": by_cohort,
        },
        expert_gate_weights=[float(x) for x in gate_w.mean(axis=0)],
    )


def _user_cohorts(dataset):
    """Per-user cohort labels from the 'cohort' profile field, if present."""
    if not any("cohort" in u.profile for u in dataset.users):
        return None
    return np.array([u.profile.get("cohort", "") for u in dataset.users])


def similarity_report(vectors: dict, query_ids, k: int, seed: int = 0) -> dict:
    """Top-k and seeded random-k cosine-similarity tables per query.

    Zero vectors cannot be cosine-normalized and are excluded with a
    warning.  The query itself stays in the candidate pool, so its own
    entry appears at similarity 1.0.
    """
    ids = []
    rows = []
    for vid, vec in vectors.items():
        arr = np.asarray(vec, dtype=np.float64)
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            logger.warning("similarity_report: excluding zero vector %r", vid)
            continue
        ids.append(vid)
        rows.append(arr / norm)
    if not rows:
        raise DataError("similarity_report: no non-zero vectors")
    mat = np.stack(rows)
    index = {vid: i for i, vid in enumerate(ids)}
    rng = np.random.default_rng(seed)
    k_eff = min(k, len(ids))
    queries = []
    for qid in query_ids:
        if qid not in index:
            raise DataError(f"similarity_report: query id {qid!r} not found (or zero vector)")
        sims = mat @ mat[index[qid]]
        top = np.argsort(-sims, kind="mergesort")[:k_eff]
        rand = rng.choice(len(ids), size=k_eff, replace=False)
        queries.append({
            "query": qid,
            "top": [{"id": ids[i], "similarity": float(sims[i])} for i in top],
            "random": [{"id": ids[i], "similarity": float(sims[i])} for i in rand],
            "top_mean": float(sims[top].mean()),
            "random_mean": float(sims[rand].mean()),
        })
    return {"k": k_eff, "queries": queries}
