"""Adam optimization, the seeded training loop, and gradient verification.

Training is bitwise deterministic for a fixed (seed, config, dataset):
initialization, epoch shuffling, and update order all draw from one PCG64
stream, minibatch reductions run in a fixed order, and all state is
float64.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Interaction, ItemRecord, UserRecord, build_schema
from .errors import DataError, NumericalError
from .model import (
    Model,
    ModelConfig,
    backward_batch,
    batch_objective,
    encode_dataset,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One in-place Adam update with bias correction."""
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for key, g in grads.items():
        m = state.m[key]
        v = state.v[key]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        params[key] -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class TrainLog:
    initial_loss: float
    epoch_losses: list


def train(dataset: Dataset, cfg: ModelConfig):
    """Train a model on every interaction in `dataset`; returns (model, log).

    The log holds the pre-update mean objective (file order) and one mean
    objective per epoch.
    """
    if not dataset.interactions:
        raise DataError("no interactions to train on")
    enc = encode_dataset(dataset, cfg)
    rng = np.random.default_rng(cfg.seed)
    model = Model.init(cfg, dataset.schema, rng)
    state = AdamState.init(model.params)
    n = enc.n
    bs = cfg.batch_size

    initial = _epoch_mean_loss(model, enc, np.arange(n), bs)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            rows = perm[start:start + bs]
            loss, _, trace = batch_objective(model, enc, rows)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss {loss} at epoch {epoch + 1}, "
                    f"batch starting at {start}"
                )
            grads = backward_batch(model, enc, trace)
            adam_step(model.params, grads, state, cfg.learning_rate)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
    return model, TrainLog(initial_loss=initial, epoch_losses=epoch_losses)


def _epoch_mean_loss(model, enc, order, bs):
    losses = [batch_objective(model, enc, order[s:s + bs])[0]
              for s in range(0, order.size, bs)]
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# gradient checking against central finite differences

GRADCHECK_CFG = ModelConfig(
    fusion_dim=6, embed_dim=4, expert_count=2, gate="att", cross_layers=2,
    mlp_widths=(8, 4), l2_lambda=1e-3, batch_size=16,
)


def gradcheck_dataset(seed: int = 0) -> Dataset:
    """A small random dataset exercising every parameter path.

    Includes an empty interest list and an item without metadata so the
    degenerate branches get gradient coverage too.
    """
    rng = np.random.default_rng(seed)
    interests = [f"tag{i}" for i in range(6)]
    users = []
    for i in range(6):
        toks = list(rng.choice(interests, size=rng.integers(1, 4), replace=False))
        if i == 0:
            toks = []
        users.append(UserRecord(
            user_id=f"u{i}",
            interests=toks,
            profile={"tier": f"t{rng.integers(0, 3)}", "region": f"r{rng.integers(0, 2)}"},
        ))
    items = []
    for i in range(8):
        meta = {"kind": f"k{rng.integers(0, 3)}", "size": f"s{rng.integers(0, 2)}"}
        if i == 0:
            meta = {}
        items.append(ItemRecord(
            item_id=f"i{i}",
            tsem=rng.standard_normal(3),
            sem=rng.standard_normal(4),
            sty=rng.standard_normal(5),
            meta=meta,
        ))
    inters = []
    for r in range(20):
        inters.append(Interaction(
            user_id=f"u{rng.integers(0, 6)}",
            item_id=f"i{rng.integers(0, 8)}",
            label=int(rng.integers(0, 2)),
            timestamp=r,
        ))
    return Dataset(users=users, items=items, interactions=inters,
                   schema=build_schema(users, items))


def relative_error(a, b, floor: float = 1e-6):
    """|a-b| scaled by the larger magnitude, floored so FD noise near zero
    gradients is judged on an absolute scale."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(cfg: ModelConfig | None = None, seed: int = 0, h: float = 1e-5) -> dict:
    """Compare analytic gradients to central differences on a random batch.

    Returns {"per_group": {key: max_rel_err}, "max_rel_err": float,
    "worst_group": key}.
    """
    cfg = cfg if cfg is not None else GRADCHECK_CFG
    dataset = gradcheck_dataset(seed)
    enc = encode_dataset(dataset, cfg)
    rng = np.random.default_rng(seed + 1)
    model = Model.init(cfg, dataset.schema, rng)
    rows = rng.permutation(enc.n)[:cfg.batch_size]

    _, _, trace = batch_objective(model, enc, rows)
    analytic = backward_batch(model, enc, trace)

    per_group = {}
    for key, tensor in model.params.items():
        flat = tensor.ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _, _ = batch_objective(model, enc, rows)
            flat[i] = orig - h
            down, _, _ = batch_objective(model, enc, rows)
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * h)
        err = relative_error(analytic[key].ravel(), fd)
        per_group[key] = float(err.max()) if err.size else 0.0
    worst = max(per_group, key=per_group.get)
    return {"per_group": per_group, "max_rel_err": per_group[worst], "worst_group": worst}


def gradcheck_variants():
    """The gate/cross/expert grid used for acceptance-level verification."""
    variants = []
    for gate in ("att", "sen"):
        for crosses in (0, 2):
            for k in (1, 3):
                variants.append(replace(GRADCHECK_CFG, gate=gate, cross_layers=crosses,
                                         expert_count=k))
    for crosses in (0, 2):
        variants.append(replace(GRADCHECK_CFG, gate="none", cross_layers=crosses,
                                 expert_count=1))
    return variants
