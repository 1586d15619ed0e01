"""Versioned model container: text header + named float64 tensor blocks.

Layout (all header lines UTF-8, '\n' terminated):

    fuserank-model 1
    [config]
    key = value          (every ModelConfig field)
    [schema]
    interest_vocab = <json list of tokens>
    profile_field <name> = <json list>
    meta_field <name> = <json list>
    modality_dim <mod> = <int>
    [tensors]
    tensor <name> <dim,dim,...>
    <raw little-endian float64 bytes, row-major>
    ... repeated per tensor

Floats in the header use repr(), tensor payloads are the exact bytes, so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .data import DataSchema, Vocab
from .errors import DataError
from .model import Model, ModelConfig

MAGIC = "fuserank-model 1"

_CONFIG_STR = {"gate"}
_CONFIG_FLOAT = {"l2_lambda", "learning_rate"}
_CONFIG_TUPLE_INT = {"mlp_widths"}
_CONFIG_TUPLE_STR = {"modalities"}


def _config_lines(cfg: ModelConfig):
    yield "[config]"
    for key in ("fusion_dim", "embed_dim", "expert_count", "gate", "cross_layers",
                "mlp_widths", "modalities", "l2_lambda", "learning_rate",
                "epochs", "batch_size", "seed"):
        val = getattr(cfg, key)
        if key in _CONFIG_TUPLE_INT or key in _CONFIG_TUPLE_STR:
            val = ",".join(str(v) for v in val)
        elif key in _CONFIG_FLOAT:
            val = repr(val)
        yield f"{key} = {val}"


def _parse_config(lines) -> ModelConfig:
    kwargs = {}
    for line in lines:
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key in _CONFIG_STR:
            kwargs[key] = raw
        elif key in _CONFIG_FLOAT:
            kwargs[key] = float(raw)
        elif key in _CONFIG_TUPLE_INT:
            kwargs[key] = tuple(int(v) for v in raw.split(",")) if raw else ()
        elif key in _CONFIG_TUPLE_STR:
            kwargs[key] = tuple(v for v in raw.split(",") if v)
        else:
            kwargs[key] = int(raw)
    return ModelConfig(**kwargs)


def _check_field_name(name):
    if "\n" in name or "=" in name:
        raise DataError(f"field name {name!r} cannot be stored in a model header")


def save_model(model: Model, path):
    for fname, _ in model.schema.profile_fields + model.schema.meta_fields:
        _check_field_name(fname)
    with open(path, "wb") as fh:
        def line(s):
            fh.write((s + "\n").encode("utf-8"))

        line(MAGIC)
        for l in _config_lines(model.cfg):
            line(l)
        line("[schema]")
        line(f"interest_vocab = {json.dumps(model.schema.interest_vocab.tokens)}")
        for name, vocab in model.schema.profile_fields:
            line(f"profile_field {name} = {json.dumps(vocab.tokens)}")
        for name, vocab in model.schema.meta_fields:
            line(f"meta_field {name} = {json.dumps(vocab.tokens)}")
        for mod, dim in model.schema.modality_dims.items():
            line(f"modality_dim {mod} = {dim}")
        line("[tensors]")
        for name, tensor in model.params.items():
            shape = ",".join(str(s) for s in tensor.shape)
            line(f"tensor {name} {shape}")
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        def readline():
            raw = fh.readline()
            if not raw:
                raise DataError(f"{path}: truncated model file")
            return raw.decode("utf-8").rstrip("\n")

        if readline() != MAGIC:
            raise DataError(f"{path}: not a fuserank model file (bad magic)")
        if readline() != "[config]":
            raise DataError(f"{path}: expected [config] section")
        config_lines = []
        line = readline()
        while line != "[schema]":
            config_lines.append(line)
            line = readline()
        cfg = _parse_config(config_lines)

        interest_vocab = Vocab()
        profile_fields = []
        meta_fields = []
        modality_dims = {}
        line = readline()
        while line != "[tensors]":
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key == "interest_vocab":
                interest_vocab = Vocab(json.loads(raw))
            elif key.startswith("profile_field "):
                profile_fields.append((key.split(" ", 1)[1], Vocab(json.loads(raw))))
            elif key.startswith("meta_field "):
                meta_fields.append((key.split(" ", 1)[1], Vocab(json.loads(raw))))
            elif key.startswith("modality_dim "):
                modality_dims[key.split(" ", 1)[1]] = int(raw)
            else:
                raise DataError(f"{path}: unknown schema line {line!r}")
            line = readline()
        schema = DataSchema(interest_vocab=interest_vocab, profile_fields=profile_fields,
                            meta_fields=meta_fields, modality_dims=modality_dims)

        params = {}
        while True:
            raw = fh.readline()
            if not raw:
                break
            header = raw.decode("utf-8").rstrip("\n")
            # field-derived tensor names may contain spaces; shape is the tail
            if not header.startswith("tensor "):
                raise DataError(f"{path}: malformed tensor header {header!r}")
            name, _, shape_s = header[len("tensor "):].rpartition(" ")
            if not name:
                raise DataError(f"{path}: malformed tensor header {header!r}")
            shape = tuple(int(s) for s in shape_s.split(",")) if shape_s else ()
            count = int(np.prod(shape)) if shape else 1
            payload = fh.read(count * 8)
            if len(payload) != count * 8:
                raise DataError(f"{path}: truncated tensor payload for {name!r}")
            params[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        return Model(cfg, schema, params)
