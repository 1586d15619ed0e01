"""Dataset ingestion: users, items, interactions, vocabularies, splits.

File formats (all UTF-8):

* users.jsonl   {"user_id": str, "interests": [str], "profile": {str: str}}
* items.jsonl   {"item_id": str, "tsem": [f]?, "sem": [f]?, "sty": [f]?,
                 "meta": {str: str}}
* interactions.tsv   user_id <TAB> item_id <TAB> label <TAB> timestamp

Vocabulary indices are dense and start at 1; index 0 is reserved for
out-of-vocabulary tokens.  Token order follows first occurrence in file
order, so a load/save/load round trip preserves every index.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

ITEM_MODALITIES = ("tsem", "sem", "sty")  # raw vector modalities carried by items


@dataclass
class UserRecord:
    user_id: str
    interests: list
    profile: dict


@dataclass
class ItemRecord:
    """Per-item modality bundle: raw vectors plus categorical metadata."""

    item_id: str
    tsem: np.ndarray | None = None
    sem: np.ndarray | None = None
    sty: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def modality(self, name):
        return getattr(self, name)


@dataclass
class Interaction:
    user_id: str
    item_id: str
    label: int
    timestamp: int


class Vocab:
    """Token to dense-index map; 0 is the reserved OOV index."""

    def __init__(self, tokens=()):
        self.tokens = list(tokens)
        self._index = {t: i + 1 for i, t in enumerate(self.tokens)}

    def add(self, token):
        if token not in self._index:
            self.tokens.append(token)
            self._index[token] = len(self.tokens)

    def lookup(self, token) -> int:
        return self._index.get(token, 0)

    def __len__(self):
        return len(self.tokens) + 1  # including the OOV slot

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens


@dataclass
class DataSchema:
    """Everything a model needs to encode raw records: vocabs and dims.

    Stored inside the model container so prediction never depends on
    rebuilding vocabularies from data.
    """

    interest_vocab: Vocab
    profile_fields: list          # [(field_name, Vocab)]
    meta_fields: list             # [(field_name, Vocab)]
    modality_dims: dict           # modality name -> dim, for present modalities

    def __eq__(self, other):
        return (
            isinstance(other, DataSchema)
            and self.interest_vocab == other.interest_vocab
            and self.profile_fields == other.profile_fields
            and self.meta_fields == other.meta_fields
            and self.modality_dims == other.modality_dims
        )


@dataclass
class Dataset:
    users: list
    items: list
    interactions: list
    schema: DataSchema
    user_index: dict = field(default_factory=dict)
    item_index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.user_index:
            self.user_index = {u.user_id: i for i, u in enumerate(self.users)}
        if not self.item_index:
            self.item_index = {it.item_id: i for i, it in enumerate(self.items)}


def _parse_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc


def load_users(path) -> list:
    users = []
    seen = set()
    for lineno, rec in _parse_jsonl(path):
        try:
            uid = str(rec["user_id"])
            interests = [str(t) for t in rec.get("interests", [])]
            profile = {str(k): str(v) for k, v in rec.get("profile", {}).items()}
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed user record ({exc})") from exc
        if not uid:
            raise DataError(f"{path}:{lineno}: empty user_id")
        if uid in seen:
            raise DataError(f"{path}:{lineno}: duplicate user_id {uid!r}")
        seen.add(uid)
        users.append(UserRecord(user_id=uid, interests=interests, profile=profile))
    return users


def load_items(path) -> list:
    items = []
    seen = set()
    dims = {}
    for lineno, rec in _parse_jsonl(path):
        try:
            iid = str(rec["item_id"])
            meta = {str(k): str(v) for k, v in rec.get("meta", {}).items()}
            vecs = {}
            for mod in ITEM_MODALITIES:
                if rec.get(mod) is not None:
                    vecs[mod] = np.asarray(rec[mod], dtype=np.float64)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed item record ({exc})") from exc
        if not iid:
            raise DataError(f"{path}:{lineno}: empty item_id")
        if iid in seen:
            raise DataError(f"{path}:{lineno}: duplicate item_id {iid!r}")
        seen.add(iid)
        for mod, v in vecs.items():
            if v.ndim != 1:
                raise DataError(f"{path}:{lineno}: item {iid!r} field {mod!r} is not a flat vector")
            if not np.all(np.isfinite(v)):
                raise DataError(f"{path}:{lineno}: item {iid!r} field {mod!r} has non-finite values")
            if mod in dims and dims[mod] != v.size:
                raise DataError(
                    f"{path}:{lineno}: item {iid!r} has {mod!r} dimension {v.size}, "
                    f"expected {dims[mod]}"
                )
            dims.setdefault(mod, v.size)
        items.append(ItemRecord(item_id=iid, meta=meta, **vecs))
    return items


def load_interactions(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            uid, iid, label_s, ts_s = parts
            try:
                label = int(label_s)
                ts = int(ts_s)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer label/timestamp ({exc})") from exc
            if label not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            rows.append(Interaction(user_id=uid, item_id=iid, label=label, timestamp=ts))
    return rows


def build_schema(users, items) -> DataSchema:
    """Vocabularies by first occurrence in file order; dims from items."""
    interest_vocab = Vocab()
    profile_fields = []
    profile_map = {}
    for u in users:
        for t in u.interests:
            interest_vocab.add(t)
        for f, v in u.profile.items():
            if f not in profile_map:
                vocab = Vocab()
                profile_map[f] = vocab
                profile_fields.append((f, vocab))
            profile_map[f].add(v)
    meta_fields = []
    meta_map = {}
    dims = {}
    for it in items:
        for f, v in it.meta.items():
            if f not in meta_map:
                vocab = Vocab()
                meta_map[f] = vocab
                meta_fields.append((f, vocab))
            meta_map[f].add(v)
        for mod in ITEM_MODALITIES:
            vec = it.modality(mod)
            if vec is not None:
                dims.setdefault(mod, int(vec.size))
    return DataSchema(
        interest_vocab=interest_vocab,
        profile_fields=profile_fields,
        meta_fields=meta_fields,
        modality_dims=dims,
    )


def load_dataset(data_dir) -> Dataset:
    """Load users.jsonl, items.jsonl, interactions.tsv from a directory."""
    if not os.path.isdir(data_dir):
        raise DataError(f"data directory not found: {data_dir}")
    users = load_users(os.path.join(data_dir, "users.jsonl"))
    items = load_items(os.path.join(data_dir, "items.jsonl"))
    interactions = load_interactions(os.path.join(data_dir, "interactions.tsv"))
    if not interactions:
        raise DataError(f"no interactions in {data_dir}")
    ds = Dataset(users=users, items=items, interactions=interactions,
                 schema=build_schema(users, items))
    for n, inter in enumerate(interactions, start=1):
        if inter.user_id not in ds.user_index:
            raise DataError(f"interactions.tsv:{n}: unknown user_id {inter.user_id!r}")
        if inter.item_id not in ds.item_index:
            raise DataError(f"interactions.tsv:{n}: unknown item_id {inter.item_id!r}")
    return ds


def save_dataset(ds: Dataset, data_dir):
    """Write a dataset back to users.jsonl / items.jsonl / interactions.tsv."""
    os.makedirs(data_dir, exist_ok=True)
    with open(os.path.join(data_dir, "users.jsonl"), "w", encoding="utf-8") as fh:
        for u in ds.users:
            rec = {"user_id": u.user_id, "interests": u.interests, "profile": u.profile}
            fh.write(json.dumps(rec) + "\n")
    with open(os.path.join(data_dir, "items.jsonl"), "w", encoding="utf-8") as fh:
        for it in ds.items:
            rec = {"item_id": it.item_id}
            for mod in ITEM_MODALITIES:
                vec = it.modality(mod)
                if vec is not None:
                    rec[mod] = vec.tolist()
            rec["meta"] = it.meta
            fh.write(json.dumps(rec) + "\n")
    with open(os.path.join(data_dir, "interactions.tsv"), "w", encoding="utf-8") as fh:
        for inter in ds.interactions:
            fh.write(f"{inter.user_id}\t{inter.item_id}\t{inter.label}\t{inter.timestamp}\n")


def temporal_split(interactions, boundary_timestamp):
    """Partition by timestamp: strictly-before goes to train, the rest to test."""
    train = [i for i in interactions if i.timestamp < boundary_timestamp]
    test = [i for i in interactions if i.timestamp >= boundary_timestamp]
    return train, test


def subset(ds: Dataset, interactions) -> Dataset:
    """Same users/items/schema, different interaction list."""
    return Dataset(users=ds.users, items=ds.items, interactions=list(interactions),
                   schema=ds.schema, user_index=ds.user_index, item_index=ds.item_index)
