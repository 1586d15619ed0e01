"""Style and semantic feature extraction from convolutional feature maps.

An item arrives as a stack of feature maps (one C x H x W grid per layer).
Two vectors are derived from the stack:

* a semantic vector: per-channel spatial mean of the deepest layer,
* a style vector: channel-wise Gram matrices of selected shallow layers,
  each block-max-pooled to a fixed P x P grid and concatenated.

Everything here is a pure function of its inputs; no normalization is
applied, downstream projections own any rescaling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LayerMap:
    """One convolutional layer output, stored as a (C, H, W) float array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise DataError(f"layer map must be 3-dimensional (C, H, W), got shape {v.shape}")
        if min(v.shape) == 0:
            raise DataError(f"layer map has an empty dimension: shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("layer map contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_flat(cls, c: int, h: int, w: int, data) -> "LayerMap":
        """Build from a flat row-major-per-channel value list."""
        arr = np.asarray(data, dtype=np.float64)
        if arr.size != c * h * w:
            raise DataError(
                f"layer data length {arr.size} does not match c*h*w = {c * h * w}"
            )
        return cls(arr.reshape(c, h, w))


@dataclass(frozen=True)
class FeatureMapStack:
    """Ordered (shallow to deep) feature maps for one item."""

    item_id: str
    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise DataError(f"item {self.item_id!r}: feature map stack is empty")
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass(frozen=True)
class StyleConfig:
    """Which layers feed the style vector and the pooled Gram grid size."""

    style_layers: tuple = (0, 1, 2)
    pool_grid: int = 4

    def __post_init__(self):
        layers = tuple(int(i) for i in self.style_layers)
        if len(set(layers)) != len(layers):
            raise DataError(f"style_layers must be distinct, got {layers}")
        if self.pool_grid < 1:
            raise DataError(f"pool_grid must be >= 1, got {self.pool_grid}")
        object.__setattr__(self, "style_layers", layers)


def gram_matrix(layer: LayerMap) -> np.ndarray:
    """Channel-wise Gram matrix: G[j,k] = mean over positions of F_j * F_k.

    Output is C x C, exactly symmetric, PSD up to float roundoff.
    """
    f = layer.values.reshape(layer.channels, -1)
    g = f @ f.T / f.shape[1]
    # BLAS gemm is symmetric here in practice; symmetrize anyway so the
    # contract does not depend on kernel internals.
    return 0.5 * (g + g.T)


def semantic_pool(last_layer: LayerMap) -> np.ndarray:
    """Per-channel arithmetic mean over all H*W positions."""
    return last_layer.values.mean(axis=(1, 2))


def _block_bounds(c: int, p: int) -> np.ndarray:
    """Split c indices into p contiguous blocks, earlier blocks get the extra."""
    base, extra = divmod(c, p)
    sizes = [base + 1] * extra + [base] * (p - extra)
    return np.concatenate([[0], np.cumsum(sizes)])

def pool_gram(g: np.ndarray, p: int) -> np.ndarray:
    """Max-pool a C x C Gram matrix onto a P x P grid of contiguous blocks."""
    g = np.asarray(g, dtype=np.float64)
    c = g.shape[0]
    if g.ndim != 2 or g.shape[1] != c:
        raise DataError(f"expected a square matrix, got shape {g.shape}")
    if p > c:
        raise DataError(f"pool grid {p} exceeds channel count {c}")
    bounds = _block_bounds(c, p)
    out = np.empty((p, p), dtype=np.float64)
    for i in range(p):
        for j in range(p):
            out[i, j] = g[bounds[i]:bounds[i + 1], bounds[j]:bounds[j + 1]].max()
    return out


def style_vector(stack: FeatureMapStack, cfg: StyleConfig = StyleConfig()) -> np.ndarray:
    """Pooled-Gram style features of the selected layers, concatenated in order.

    Length is len(style_layers) * pool_grid**2.
    """
    n = len(stack.layers)
    for idx in cfg.style_layers:
        if idx < 0 or idx >= n:
            raise DataError(
                f"item {stack.item_id!r}: style layer {idx} out of range for a "
                f"{n}-layer stack"
            )
    min_c = min(stack.layers[idx].channels for idx in cfg.style_layers)
    if cfg.pool_grid > min_c:
        raise DataError(
            f"item {stack.item_id!r}: pool grid {cfg.pool_grid} exceeds the "
            f"smallest channel count {min_c} among style layers"
        )
    parts = [
        pool_gram(gram_matrix(stack.layers[idx]), cfg.pool_grid).ravel()
        for idx in cfg.style_layers
    ]
    return np.concatenate(parts)


def read_feature_maps(path):
    """Yield FeatureMapStack objects from a JSON Lines feature-map file."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                item_id = rec["item_id"]
                layers = [
                    LayerMap.from_flat(l["c"], l["h"], l["w"], l["data"])
                    for l in rec["layers"]
                ]
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed feature-map record ({exc})") from exc
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            yield FeatureMapStack(item_id=str(item_id), layers=layers)


def extract_to_file(maps_path, out_path, cfg: StyleConfig = StyleConfig()) -> int:
    """Run style + semantic extraction over a feature-map file.

    Writes one JSON line per item: {"item_id", "sty", "sem"} where "sem" is
    the semantic pool of the last layer in the stack.  Returns the item count.
    """
    count = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for stack in read_feature_maps(maps_path):
            sty = style_vector(stack, cfg)
            sem = semantic_pool(stack.layers[-1])
            rec = {"item_id": stack.item_id, "sty": sty.tolist(), "sem": sem.tolist()}
            out.write(json.dumps(rec) + "\n")
            count += 1
    return count
