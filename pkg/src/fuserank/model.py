"""The trainable fusion network and its analytic gradients.

Architecture, per interaction:

1. user tower: mean of interest embeddings concatenated with profile-field
   embeddings, linearly projected to the fusion dimension d;
2. per-expert, per-modality linear projections of the raw modality vectors
   (tsem / sem / sty vectors from the item, meta via embedding lookups);
3. a gate per expert that reweights the projected modalities conditioned
   on the user vector: dot-product softmax attention ("att"), a
   squeeze-and-excitation bottleneck ("sen"), or a plain mean ("none");
4. a softmax aggregation gate over expert outputs scored by dot product
   with the user vector;
5. DCN-V2 style cross layers over concat(user, fused item), then a relu
   MLP head and a sigmoid output.

Forward keeps a trace of every intermediate; `backward_batch` turns the
trace into exact gradients of the regularized binary cross-entropy.  All
math is float64 and the batch reduction order is fixed, so results are
bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataSchema, Interaction, ItemRecord, UserRecord
from .errors import DataError

MODALITIES = ("tsem", "sem", "sty", "meta")
GATES = ("att", "sen", "none")
PROB_CLAMP = 1e-7


@dataclass
class ModelConfig:
    fusion_dim: int = 32
    embed_dim: int = 8
    expert_count: int = 3
    gate: str = "att"
    cross_layers: int = 2
    mlp_widths: tuple = (64, 32)
    modalities: tuple = MODALITIES
    l2_lambda: float = 1e-3
    learning_rate: float = 1e-3
    epochs: int = 1
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        self.modalities = tuple(self.modalities)
        self.mlp_widths = tuple(int(w) for w in self.mlp_widths)
        if self.gate not in GATES:
            raise DataError(f"gate must be one of {GATES}, got {self.gate!r}")
        if not self.modalities:
            raise DataError("at least one modality must be enabled")
        for m in self.modalities:
            if m not in MODALITIES:
                raise DataError(f"unknown modality {m!r}; valid: {MODALITIES}")
        if min(self.fusion_dim, self.embed_dim, self.cross_layers) < 0:
            raise DataError("fusion_dim, embed_dim, cross_layers must be >= 0")
        if self.gate != "none" and self.expert_count < 1:
            raise DataError("expert_count must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.epochs < 0 or self.learning_rate < 0 or self.l2_lambda < 0:
            raise DataError("epochs, learning_rate, l2_lambda must be >= 0")

    @property
    def active_experts(self) -> int:
        return 1 if self.gate == "none" else self.expert_count


# ---------------------------------------------------------------------------
# small numeric helpers

def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(a):
    """Stable softmax over the last axis."""
    a = np.asarray(a, dtype=np.float64)
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def bce_loss(p, y):
    """Elementwise binary cross-entropy; p must already be clamped away from {0,1}."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


# ---------------------------------------------------------------------------
# fusion primitives (shape-polymorphic: leading axes broadcast)

def attention_fuse(v_user, mods):
    """Dot-product attention over modality vectors.

    v_user: (..., d); mods: (..., J, d).  Returns (v_il, weights) where the
    weights are a softmax over per-modality scores v_user . mods_j.
    """
    scores = np.einsum("...d,...jd->...j", v_user, mods)
    w = softmax(scores)
    v_il = np.einsum("...j,...jd->...d", w, mods)
    return v_il, w


def senet_fuse(v_user, mods, w1, w2):
    """Squeeze-and-excitation gates: sigmoid bottleneck over channel means.

    Gates are positive but not normalized to sum to one.
    """
    s = mods.mean(axis=-1)                                  # (..., J)
    z = np.concatenate([s, v_user.mean(axis=-1, keepdims=True)], axis=-1)
    h = np.maximum(z @ w1.T, 0.0)
    g = sigmoid(h @ w2.T)
    v_il = np.einsum("...j,...jd->...d", g, mods)
    return v_il, g


def moe_mix(v_user, o_stack):
    """Blend expert outputs with a dot-product softmax aggregation gate.

    v_user: (n, d); o_stack: (K, n, d).  Returns (v_il, gate_weights).
    """
    q = np.einsum("nd,knd->nk", v_user, o_stack)
    gamma = softmax(q)
    v_il = np.einsum("nk,knd->nd", gamma, o_stack)
    return v_il, gamma


def cross_layer(x0, xl, w, b):
    """One bounded-degree cross: x0 * (W xl + b) + xl (elementwise product)."""
    if x0.shape != xl.shape:
        raise DataError(f"cross layer shape mismatch: {x0.shape} vs {xl.shape}")
    return x0 * (xl @ w.T + b) + xl


def senet_bottleneck_width(n_modalities: int) -> int:
    return math.ceil(n_modalities / 2) + 1


# ---------------------------------------------------------------------------
# parameters

def _glorot(rng, shape):
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def modality_input_dim(cfg: ModelConfig, schema: DataSchema, mod: str) -> int:
    if mod == "meta":
        return cfg.embed_dim * len(schema.meta_fields)
    dim = schema.modality_dims.get(mod)
    if dim is None:
        raise DataError(f"modality {mod!r} enabled but the dataset has no {mod!r} vectors")
    return dim


class Model:
    """Bundles config, data schema, and the parameter dictionary.

    Parameters live in an ordered dict of float64 arrays keyed by path-like
    names ("proj/k0/sty/W", ...); gradient sets use the same keys.
    """

    def __init__(self, cfg: ModelConfig, schema: DataSchema, params: dict):
        self.cfg = cfg
        self.schema = schema
        self.params = params

    @classmethod
    def init(cls, cfg: ModelConfig, schema: DataSchema, rng) -> "Model":
        d, de = cfg.fusion_dim, cfg.embed_dim
        for mod in cfg.modalities:
            modality_input_dim(cfg, schema, mod)  # fail early if a modality is absent
        if "meta" in cfg.modalities and not schema.meta_fields:
            raise DataError("modality 'meta' enabled but the dataset has no metadata fields")
        p = {}
        p["emb/interest"] = _glorot(rng, (len(schema.interest_vocab), de))
        for name, vocab in schema.profile_fields:
            p[f"emb/profile/{name}"] = _glorot(rng, (len(vocab), de))
        for name, vocab in schema.meta_fields:
            p[f"emb/meta/{name}"] = _glorot(rng, (len(vocab), de))
        user_in = de * (1 + len(schema.profile_fields))
        p["user/W"] = _glorot(rng, (d, user_in))
        j = len(cfg.modalities)
        for k in range(cfg.active_experts):
            for mod in cfg.modalities:
                din = modality_input_dim(cfg, schema, mod)
                p[f"proj/k{k}/{mod}/W"] = _glorot(rng, (d, din))
                p[f"proj/k{k}/{mod}/b"] = np.zeros(d)
        if cfg.gate == "sen":
            width = senet_bottleneck_width(j)
            for k in range(cfg.active_experts):
                p[f"sen/k{k}/W1"] = _glorot(rng, (width, j + 1))
                p[f"sen/k{k}/W2"] = _glorot(rng, (j, width))
        dx = 2 * d
        for l in range(cfg.cross_layers):
            p[f"cross/l{l}/W"] = _glorot(rng, (dx, dx))
            p[f"cross/l{l}/b"] = np.zeros(dx)
        dims = [dx] + list(cfg.mlp_widths)
        for i in range(len(dims) - 1):
            p[f"mlp/l{i}/W"] = _glorot(rng, (dims[i + 1], dims[i]))
            p[f"mlp/l{i}/b"] = np.zeros(dims[i + 1])
        p["out/W"] = _glorot(rng, (1, dims[-1]))
        p["out/b"] = np.zeros(1)
        return cls(cfg, schema, p)

    def param_count(self) -> int:
        return sum(int(a.size) for a in self.params.values())

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def check_finite(self):
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise DataError(f"parameter tensor {k!r} contains non-finite values")


# ---------------------------------------------------------------------------
# encoding raw records into index/matrix form

class EncodedData:
    """Dense index arrays and modality matrices for a set of interactions."""

    def __init__(self, users, items, interactions, schema: DataSchema, modalities,
                 user_index=None, item_index=None):
        self.schema = schema
        self.modalities = tuple(modalities)
        user_index = user_index or {u.user_id: i for i, u in enumerate(users)}
        item_index = item_index or {it.item_id: i for i, it in enumerate(items)}

        lmax = max((len(u.interests) for u in users), default=0)
        nu = len(users)
        self.interest_idx = np.zeros((nu, lmax), dtype=np.int64)
        self.interest_mask = np.zeros((nu, lmax), dtype=np.float64)
        self.interest_count = np.zeros(nu, dtype=np.float64)
        for i, u in enumerate(users):
            for t, tok in enumerate(u.interests):
                self.interest_idx[i, t] = schema.interest_vocab.lookup(tok)
                self.interest_mask[i, t] = 1.0
            self.interest_count[i] = len(u.interests)
        npf = len(schema.profile_fields)
        self.profile_idx = np.zeros((nu, npf), dtype=np.int64)
        for fi, (fname, vocab) in enumerate(schema.profile_fields):
            for i, u in enumerate(users):
                val = u.profile.get(fname)
                self.profile_idx[i, fi] = 0 if val is None else vocab.lookup(val)

        ni = len(items)
        self.item_vecs = {}
        self.item_present = {}
        for mod in self.modalities:
            if mod == "meta":
                continue
            dim = schema.modality_dims.get(mod)
            if dim is None:
                raise DataError(f"modality {mod!r} enabled but the dataset has no {mod!r} vectors")
            mat = np.zeros((ni, dim), dtype=np.float64)
            present = np.zeros(ni, dtype=bool)
            for i, it in enumerate(items):
                vec = it.modality(mod)
                if vec is None:
                    continue
                if vec.size != dim:
                    raise DataError(
                        f"item {it.item_id!r}: {mod!r} dimension {vec.size}, expected {dim}"
                    )
                mat[i] = vec
                present[i] = True
            self.item_vecs[mod] = mat
            self.item_present[mod] = present
        nmf = len(schema.meta_fields)
        self.meta_idx = np.zeros((ni, nmf), dtype=np.int64)
        for fi, (fname, vocab) in enumerate(schema.meta_fields):
            for i, it in enumerate(items):
                val = it.meta.get(fname)
                self.meta_idx[i, fi] = 0 if val is None else vocab.lookup(val)

        n = len(interactions)
        self.user = np.zeros(n, dtype=np.int64)
        self.item = np.zeros(n, dtype=np.int64)
        self.label = np.zeros(n, dtype=np.float64)
        self.ts = np.zeros(n, dtype=np.int64)
        for r, inter in enumerate(interactions):
            if inter.user_id not in user_index:
                raise DataError(f"interaction {r + 1}: unknown user_id {inter.user_id!r}")
            if inter.item_id not in item_index:
                raise DataError(f"interaction {r + 1}: unknown item_id {inter.item_id!r}")
            self.user[r] = user_index[inter.user_id]
            self.item[r] = item_index[inter.item_id]
            self.label[r] = inter.label
            self.ts[r] = inter.timestamp
        for mod, present in self.item_present.items():
            used = np.unique(self.item)
            bad = used[~present[used]]
            if bad.size:
                raise DataError(
                    f"item {items[int(bad[0])].item_id!r} is missing enabled "
                    f"modality {mod!r}"
                )

    @property
    def n(self) -> int:
        return self.user.size


def encode_dataset(dataset, cfg: ModelConfig) -> EncodedData:
    return EncodedData(dataset.users, dataset.items, dataset.interactions,
                       dataset.schema, cfg.modalities,
                       dataset.user_index, dataset.item_index)


def encode_pairs(user: UserRecord, items, schema: DataSchema, cfg: ModelConfig) -> EncodedData:
    """Encode one user against a list of items (for scoring)."""
    inters = [Interaction(user.user_id, it.item_id, 0, 0) for it in items]
    return EncodedData([user], list(items), inters, schema, cfg.modalities)


# ---------------------------------------------------------------------------
# forward

def forward_batch(model: Model, enc: EncodedData, rows):
    """Score a batch of interactions; returns (clamped probs, trace).

    The trace carries every intermediate needed by backward_batch plus the
    per-sample gate weights used for evaluation reports.
    """
    cfg, p = model.cfg, model.params
    rows = np.asarray(rows, dtype=np.int64)
    u = enc.user[rows]
    it = enc.item[rows]
    d = cfg.fusion_dim
    de = cfg.embed_dim
    mods_order = cfg.modalities
    j = len(mods_order)
    k_n = cfg.active_experts

    # user tower
    idx = enc.interest_idx[u]                       # (n, L)
    msk = enc.interest_mask[u]                      # (n, L)
    denom = np.maximum(enc.interest_count[u], 1.0)  # (n,)
    emb = p["emb/interest"][idx] * msk[..., None]
    t_int = emb.sum(axis=1) / denom[:, None]        # (n, de)
    blocks = [t_int]
    pidx = enc.profile_idx[u]
    for fi, (fname, _) in enumerate(model.schema.profile_fields):
        blocks.append(p[f"emb/profile/{fname}"][pidx[:, fi]])
    u_raw = np.concatenate(blocks, axis=1) if len(blocks) > 1 else t_int
    v_user = u_raw @ p["user/W"].T                  # (n, d)

    # raw modality vectors
    midx = enc.meta_idx[it]
    raws = {}
    for mod in mods_order:
        if mod == "meta":
            parts = [p[f"emb/meta/{g}"][midx[:, gi]]
                     for gi, (g, _) in enumerate(model.schema.meta_fields)]
            raws[mod] = np.concatenate(parts, axis=1)
        else:
            raws[mod] = enc.item_vecs[mod][it]

    # per-expert projections and gates
    mods_k = []
    att_w = []
    sen_tr = []
    o_list = []
    for k in range(k_n):
        mk = np.stack(
            [raws[mod] @ p[f"proj/k{k}/{mod}/W"].T + p[f"proj/k{k}/{mod}/b"]
             for mod in mods_order], axis=1)         # (n, J, d)
        mods_k.append(mk)
        if cfg.gate == "att":
            o_k, w_k = attention_fuse(v_user, mk)
            att_w.append(w_k)
            sen_tr.append(None)
        elif cfg.gate == "sen":
            w1, w2 = p[f"sen/k{k}/W1"], p[f"sen/k{k}/W2"]
            s = mk.mean(axis=2)
            z = np.concatenate([s, v_user.mean(axis=1, keepdims=True)], axis=1)
            pre1 = z @ w1.T
            h = np.maximum(pre1, 0.0)
            pre2 = h @ w2.T
            g = sigmoid(pre2)
            o_k = np.einsum("nj,njd->nd", g, mk)
            att_w.append(g)
            sen_tr.append({"z": z, "pre1": pre1, "h": h, "g": g})
        else:  # none: unweighted mean of expert-0 projections
            o_k = mk.mean(axis=1)
            att_w.append(np.full((rows.size, j), 1.0 / j))
            sen_tr.append(None)
        o_list.append(o_k)
    o_stack = np.stack(o_list, axis=0)               # (K, n, d)

    if cfg.gate == "none":
        gamma = np.ones((rows.size, 1))
        v_il = o_stack[0]
    else:
        v_il, gamma = moe_mix(v_user, o_stack)

    # cross stack and MLP head
    x0 = np.concatenate([v_user, v_il], axis=1)
    xs = [x0]
    rs = []
    for l in range(cfg.cross_layers):
        r = xs[-1] @ p[f"cross/l{l}/W"].T + p[f"cross/l{l}/b"]
        rs.append(r)
        xs.append(x0 * r + xs[-1])
    acts = [xs[-1]]
    pres = []
    for i in range(len(cfg.mlp_widths)):
        pre = acts[-1] @ p[f"mlp/l{i}/W"].T + p[f"mlp/l{i}/b"]
        pres.append(pre)
        acts.append(np.maximum(pre, 0.0))
    logit = (acts[-1] @ p["out/W"].T + p["out/b"])[:, 0]
    p_raw = sigmoid(logit)
    prob = np.clip(p_raw, PROB_CLAMP, 1.0 - PROB_CLAMP)

    trace = {
        "rows": rows, "u": u, "it": it,
        "idx": idx, "msk": msk, "denom": denom,
        "pidx": pidx, "midx": midx,
        "u_raw": u_raw, "v_user": v_user, "raws": raws,
        "mods_k": mods_k, "att_w": att_w, "sen": sen_tr,
        "o_stack": o_stack, "gamma": gamma, "v_il": v_il,
        "xs": xs, "rs": rs, "acts": acts, "pres": pres,
        "logit": logit, "p_raw": p_raw, "prob": prob,
        "unclamped": (p_raw > PROB_CLAMP) & (p_raw < 1.0 - PROB_CLAMP),
    }
    return prob, trace


def touched_embedding_rows(model: Model, trace) -> dict:
    """Unique embedding rows referenced by the traced batch, per table."""
    touched = {}
    msk_bool = trace["msk"].astype(bool)
    touched["emb/interest"] = np.unique(trace["idx"][msk_bool])
    for fi, (fname, _) in enumerate(model.schema.profile_fields):
        touched[f"emb/profile/{fname}"] = np.unique(trace["pidx"][:, fi])
    for gi, (gname, _) in enumerate(model.schema.meta_fields):
        touched[f"emb/meta/{gname}"] = np.unique(trace["midx"][:, gi])
    return touched


def batch_objective(model: Model, enc: EncodedData, rows):
    """Mean BCE over the batch plus L2 on the embedding rows the batch touches.

    Returns (objective, mean_bce, trace).
    """
    prob, trace = forward_batch(model, enc, rows)
    y = enc.label[trace["rows"]]
    mean_bce = float(bce_loss(prob, y).mean())
    reg = 0.0
    if model.cfg.l2_lambda > 0.0:
        for key, idxs in touched_embedding_rows(model, trace).items():
            if idxs.size:
                reg += float(np.sum(model.params[key][idxs] ** 2))
    return mean_bce + model.cfg.l2_lambda * reg, mean_bce, trace


# ---------------------------------------------------------------------------
# backward

def backward_batch(model: Model, enc: EncodedData, trace) -> dict:
    """Exact gradients of batch_objective w.r.t. every parameter tensor."""
    cfg, p = model.cfg, model.params
    schema = model.schema
    grads = model.zero_grads()
    rows = trace["rows"]
    n = rows.size
    d = cfg.fusion_dim
    de = cfg.embed_dim
    mods_order = cfg.modalities
    j = len(mods_order)
    k_n = cfg.active_experts
    y = enc.label[rows]

    # loss -> logit (clamped samples contribute zero gradient)
    dlogit = np.where(trace["unclamped"], trace["p_raw"] - y, 0.0) / n

    # output layer and MLP
    dh = dlogit[:, None] * p["out/W"]                       # (n, h_last)
    grads["out/W"] += dlogit[None, :] @ trace["acts"][-1]
    grads["out/b"] += np.array([dlogit.sum()])
    for i in reversed(range(len(cfg.mlp_widths))):
        dpre = dh * (trace["pres"][i] > 0.0)
        grads[f"mlp/l{i}/W"] += dpre.T @ trace["acts"][i]
        grads[f"mlp/l{i}/b"] += dpre.sum(axis=0)
        dh = dpre @ p[f"mlp/l{i}/W"]

    # cross stack
    x0 = trace["xs"][0]
    dx0 = np.zeros_like(x0)
    delta = dh
    for l in reversed(range(cfg.cross_layers)):
        dr = delta * x0
        grads[f"cross/l{l}/W"] += dr.T @ trace["xs"][l]
        grads[f"cross/l{l}/b"] += dr.sum(axis=0)
        dx0 += delta * trace["rs"][l]
        delta = dr @ p[f"cross/l{l}/W"] + delta
    dx0 += delta
    dv_user = dx0[:, :d].copy()
    dv_il = dx0[:, d:]

    # aggregation gate over experts
    o_stack = trace["o_stack"]
    if cfg.gate == "none":
        do = dv_il[None, :, :].copy()
    else:
        gamma = trace["gamma"]
        dgamma = np.einsum("nd,knd->nk", dv_il, o_stack)
        do = np.einsum("nk,nd->knd", gamma, dv_il)
        dq = gamma * (dgamma - (gamma * dgamma).sum(axis=1, keepdims=True))
        dv_user += np.einsum("nk,knd->nd", dq, o_stack)
        do += np.einsum("nk,nd->knd", dq, trace["v_user"])

    # per-expert gates and projections
    v_user = trace["v_user"]
    draw = {mod: None for mod in mods_order}
    for k in range(k_n):
        mk = trace["mods_k"][k]
        do_k = do[k]
        if cfg.gate == "att":
            w_k = trace["att_w"][k]
            dw = np.einsum("nd,njd->nj", do_k, mk)
            dmods = w_k[:, :, None] * do_k[:, None, :]
            da = w_k * (dw - (w_k * dw).sum(axis=1, keepdims=True))
            dv_user += np.einsum("nj,njd->nd", da, mk)
            dmods += da[:, :, None] * v_user[:, None, :]
        elif cfg.gate == "sen":
            tr = trace["sen"][k]
            g = tr["g"]
            dg = np.einsum("nd,njd->nj", do_k, mk)
            dmods = g[:, :, None] * do_k[:, None, :]
            dpre2 = dg * g * (1.0 - g)
            grads[f"sen/k{k}/W2"] += dpre2.T @ tr["h"]
            dhid = dpre2 @ p[f"sen/k{k}/W2"]
            dpre1 = dhid * (tr["pre1"] > 0.0)
            grads[f"sen/k{k}/W1"] += dpre1.T @ tr["z"]
            dz = dpre1 @ p[f"sen/k{k}/W1"]
            dmods += dz[:, :j, None] / d
            dv_user += dz[:, j:] / d
        else:
            dmods = np.repeat(do_k[:, None, :], j, axis=1) / j
        for ji, mod in enumerate(mods_order):
            dm = dmods[:, ji, :]
            grads[f"proj/k{k}/{mod}/W"] += dm.T @ trace["raws"][mod]
            grads[f"proj/k{k}/{mod}/b"] += dm.sum(axis=0)
            if mod == "meta":
                back = dm @ p[f"proj/k{k}/{mod}/W"]
                draw[mod] = back if draw[mod] is None else draw[mod] + back

    # meta embeddings
    if "meta" in mods_order and draw["meta"] is not None:
        midx = trace["midx"]
        for gi, (gname, _) in enumerate(schema.meta_fields):
            np.add.at(grads[f"emb/meta/{gname}"], midx[:, gi],
                      draw["meta"][:, gi * de:(gi + 1) * de])

    # user tower
    grads["user/W"] += dv_user.T @ trace["u_raw"]
    du_raw = dv_user @ p["user/W"]
    dt = du_raw[:, :de] / trace["denom"][:, None]
    msk_bool = trace["msk"].astype(bool)
    if msk_bool.any():
        contrib = np.broadcast_to(dt[:, None, :], trace["idx"].shape + (de,))
        np.add.at(grads["emb/interest"], trace["idx"][msk_bool], contrib[msk_bool])
    for fi, (fname, _) in enumerate(schema.profile_fields):
        block = du_raw[:, de * (1 + fi):de * (2 + fi)]
        np.add.at(grads[f"emb/profile/{fname}"], trace["pidx"][:, fi], block)

    # L2 on touched embedding rows
    if cfg.l2_lambda > 0.0:
        for key, idxs in touched_embedding_rows(model, trace).items():
            if idxs.size:
                grads[key][idxs] += 2.0 * cfg.l2_lambda * p[key][idxs]
    return grads


# ---------------------------------------------------------------------------
# single-record conveniences (the batch path with n == 1)

def user_vector(model: Model, interests, profile) -> np.ndarray:
    """User tower output for raw interest tokens and profile values."""
    user = UserRecord(user_id="_q", interests=list(interests), profile=dict(profile))
    schema = model.schema
    de = model.cfg.embed_dim
    if interests:
        idxs = [schema.interest_vocab.lookup(t) for t in interests]
        t_int = model.params["emb/interest"][idxs].mean(axis=0)
    else:
        t_int = np.zeros(de)
    blocks = [t_int]
    for fname, vocab in schema.profile_fields:
        val = user.profile.get(fname)
        blocks.append(model.params[f"emb/profile/{fname}"][0 if val is None else vocab.lookup(val)])
    u_raw = np.concatenate(blocks)
    return model.params["user/W"] @ u_raw


def modality_vectors(model: Model, item: ItemRecord, expert: int) -> list:
    """Projected modality vectors for one item under one expert."""
    raws = raw_modality_vectors(model, item)
    out = []
    for mod in model.cfg.modalities:
        w = model.params[f"proj/k{expert}/{mod}/W"]
        b = model.params[f"proj/k{expert}/{mod}/b"]
        out.append(w @ raws[mod] + b)
    return out


def raw_modality_vectors(model: Model, item: ItemRecord) -> dict:
    """Raw (unprojected) modality inputs; meta via embedding concat."""
    raws = {}
    for mod in model.cfg.modalities:
        if mod == "meta":
            parts = []
            for gname, vocab in model.schema.meta_fields:
                val = item.meta.get(gname)
                parts.append(model.params[f"emb/meta/{gname}"][0 if val is None else vocab.lookup(val)])
            raws[mod] = np.concatenate(parts)
        else:
            vec = item.modality(mod)
            if vec is None:
                raise DataError(f"item {item.item_id!r} is missing enabled modality {mod!r}")
            raws[mod] = np.asarray(vec, dtype=np.float64)
    return raws


def forward_one(model: Model, user: UserRecord, item: ItemRecord):
    """Probability and trace for a single (user, item) pair."""
    enc = encode_pairs(user, [item], model.schema, model.cfg)
    prob, trace = forward_batch(model, enc, np.array([0]))
    return float(prob[0]), trace


def predict_scores(model: Model, user: UserRecord, items) -> np.ndarray:
    enc = encode_pairs(user, items, model.schema, model.cfg)
    prob, _ = forward_batch(model, enc, np.arange(len(items)))
    return prob
