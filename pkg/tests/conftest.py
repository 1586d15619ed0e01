"""Shared fixtures: small deterministic datasets and models."""

import numpy as np
import pytest

from fuserank.data import (
    Dataset,
    Interaction,
    ItemRecord,
    UserRecord,
    build_schema,
)
from fuserank.model import Model, ModelConfig


def make_tiny_dataset():
    """Three users (one with empty interests), four items, six interactions."""
    users = [
        UserRecord("u0", ["anime", "cats"], {"tier": "gold"}),
        UserRecord("u1", ["cats"], {"tier": "free"}),
        UserRecord("u2", [], {"tier": "gold"}),
    ]
    items = [
        ItemRecord("i0", tsem=np.array([1.0, 0.0]), sem=np.array([0.5, 0.5, 0.0]),
                   sty=np.array([0.1, 0.2, 0.3, 0.4]), meta={"pop": "head"}),
        ItemRecord("i1", tsem=np.array([0.0, 1.0]), sem=np.array([0.0, 1.0, 0.0]),
                   sty=np.array([0.4, 0.3, 0.2, 0.1]), meta={"pop": "tail"}),
        ItemRecord("i2", tsem=np.array([1.0, 1.0]), sem=np.array([0.2, 0.2, 0.2]),
                   sty=np.array([1.0, 0.0, 0.0, 1.0]), meta={"pop": "tail"}),
        ItemRecord("i3", tsem=np.array([-1.0, 0.5]), sem=np.array([0.0, 0.0, 1.0]),
                   sty=np.array([0.5, 0.5, 0.5, 0.5]), meta={"pop": "mid"}),
    ]
    interactions = [
        Interaction("u0", "i0", 1, 100),
        Interaction("u0", "i1", 0, 200),
        Interaction("u1", "i2", 1, 300),
        Interaction("u1", "i3", 0, 400),
        Interaction("u2", "i0", 0, 500),
        Interaction("u2", "i2", 1, 600),
    ]
    return Dataset(users=users, items=items, interactions=interactions,
                   schema=build_schema(users, items))


TINY_CFG = ModelConfig(fusion_dim=6, embed_dim=4, expert_count=2,
                       cross_layers=2, mlp_widths=(8, 4), batch_size=4)


@pytest.fixture
def tiny_dataset():
    return make_tiny_dataset()


@pytest.fixture
def tiny_model(tiny_dataset):
    rng = np.random.default_rng(3)
    return Model.init(TINY_CFG, tiny_dataset.schema, rng)
