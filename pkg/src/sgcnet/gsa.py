"""Multi-layer feature aggregation with distance-aware Gaussian weights.

Encoder layers are grouped into contiguous blocks. Inside a block of ``d``
layers, the layer at local position ``l`` (1-based) gets weight
``exp(-(d - l)^2 / (2 sigma^2))`` so the deepest layer of the block dominates.
Block sums are then mixed with per-block weights. A single cross-attention
layer turns the aggregated tokens into per-query interaction features.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .embedding import as_mat
from .errors import DimMismatch, InvalidSigma, NonFinite, PartitionOutOfRange, SchemaError

DEFAULT_PARTITION = "6-8,9-11,12"


@dataclass(frozen=True)
class LayerFeatureStack:
    """Per-layer token features, shape (L, T, C). Layer ``i`` in the public API is 1-based."""

    features: np.ndarray

    def __post_init__(self):
        f = np.array(self.features, dtype=np.float64)
        if f.ndim != 3 or 0 in f.shape:
            raise DimMismatch(f"feature stack must be (layers, tokens, dim), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise NonFinite("feature stack contains NaN or Inf")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def num_layers(self) -> int:
        return self.features.shape[0]

    @property
    def tokens(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    def layer(self, index: int) -> np.ndarray:
        return self.features[index - 1]


@dataclass(frozen=True)
class BlockPartition:
    """Ordered, disjoint, inclusive 1-based layer ranges."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple((int(a), int(b)) for a, b in self.blocks)
        if not blocks:
            raise PartitionOutOfRange("partition needs at least one block")
        prev_end = 0
        for start, end in blocks:
            if start < 1 or end < start:
                raise PartitionOutOfRange(f"invalid block {start}-{end}")
            if start <= prev_end:
                raise PartitionOutOfRange(f"block {start}-{end} overlaps or is out of order")
            prev_end = end
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def parse(cls, spec: str) -> "BlockPartition":
        """Parse ``"6-8,9-11,12"``."""
        blocks = []
        for part in spec.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                if "-" in part:
                    a, b = part.split("-", 1)
                    blocks.append((int(a), int(b)))
                else:
                    blocks.append((int(part), int(part)))
            except ValueError:
                raise PartitionOutOfRange(f"cannot parse partition block {part!r}") from None
        return cls(tuple(blocks))

    def __len__(self) -> int:
        return len(self.blocks)

    def lengths(self) -> list[int]:
        return [b - a + 1 for a, b in self.blocks]

    def validate(self, num_layers: int) -> None:
        last = self.blocks[-1][1]
        if last > num_layers:
            raise PartitionOutOfRange(
                f"partition references layer {last} but the stack has {num_layers} layers"
            )

    def __str__(self) -> str:
        return ",".join(f"{a}-{b}" if a != b else f"{a}" for a, b in self.blocks)


def default_block_weights(num_blocks: int, last_weight: float = 2.0) -> tuple:
    # the final block holds the last encoder layer and gets the larger weight
    return tuple([1.0] * (num_blocks - 1) + [last_weight])


@dataclass(frozen=True)
class GsaParams:
    partition: BlockPartition
    sigma: float = 1.0
    block_weights: Optional[tuple] = None
    # per-block explicit layer weights; replaces the sigma-derived ones when set
    intra_weights: Optional[tuple] = None

    def __post_init__(self):
        if not (self.sigma > 0) or not math.isfinite(self.sigma):
            raise InvalidSigma(f"sigma must be positive and finite, got {self.sigma}")
        n = len(self.partition)
        bw = default_block_weights(n) if self.block_weights is None else tuple(map(float, self.block_weights))
        if len(bw) != n:
            raise DimMismatch(f"{len(bw)} block weights for {n} blocks")
        object.__setattr__(self, "block_weights", bw)
        if self.intra_weights is not None:
            iw = tuple(tuple(map(float, w)) for w in self.intra_weights)
            if [len(w) for w in iw] != self.partition.lengths():
                raise DimMismatch("intra_weights must match the block lengths")
            object.__setattr__(self, "intra_weights", iw)

    @classmethod
    def from_spec(cls, spec: str = DEFAULT_PARTITION, sigma: float = 1.0,
                  block_weights=None, aggregation: str = "dgw") -> "GsaParams":
        """Build params; ``aggregation="sum"`` gives every layer weight 1."""
        partition = BlockPartition.parse(spec)
        if aggregation == "dgw":
            intra = None
        elif aggregation == "sum":
            intra = tuple((1.0,) * n for n in partition.lengths())
        else:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        return cls(partition, sigma, block_weights, intra)

    def layer_weights(self, block: int) -> np.ndarray:
        if self.intra_weights is not None:
            return np.array(self.intra_weights[block])
        return dgw_weights(self.partition.lengths()[block], self.sigma)


def dgw_weights(d: int, sigma: float) -> np.ndarray:
    """Gaussian weights for local positions 1..d; the last one is exactly 1."""
    if not (sigma > 0):
        raise InvalidSigma(f"sigma must be positive, got {sigma}")
    if d < 1:
        raise ValueError(f"block length must be >= 1, got {d}")
    dist = d - np.arange(1, d + 1, dtype=np.float64)
    return np.exp(-0.5 * dist**2 / sigma**2)


def _block_sums(stack: LayerFeatureStack, params: GsaParams) -> list[np.ndarray]:
    params.partition.validate(stack.num_layers)
    sums = []
    for s, (start, end) in enumerate(params.partition.blocks):
        w = params.layer_weights(s)
        layers = stack.features[start - 1:end]
        sums.append(np.tensordot(w, layers, axes=1))
    return sums


def aggregate(stack: LayerFeatureStack, params: GsaParams) -> np.ndarray:
    """Aggregated feature Z, shape (T, C)."""
    sums = _block_sums(stack, params)
    z = np.zeros((stack.tokens, stack.dim))
    for alpha, block in zip(params.block_weights, sums):
        z += alpha * block
    return z


@dataclass
class GsaGrad:
    sigma: np.ndarray
    block_weights: list = field(default_factory=list)


def aggregate_grad(stack: LayerFeatureStack, params: GsaParams) -> GsaGrad:
    """Jacobians of Z with respect to sigma and each block weight.

    When explicit intra-block weights are set, Z does not depend on sigma and
    its gradient is zero.
    """
    sums = _block_sums(stack, params)
    d_sigma = np.zeros((stack.tokens, stack.dim))
    if params.intra_weights is None:
        for s, (start, end) in enumerate(params.partition.blocks):
            d = end - start + 1
            w = dgw_weights(d, params.sigma)
            dist2 = (d - np.arange(1, d + 1, dtype=np.float64)) ** 2
            dw = w * dist2 / params.sigma**3
            d_sigma += params.block_weights[s] * np.tensordot(dw, stack.features[start - 1:end], axes=1)
    return GsaGrad(sigma=d_sigma, block_weights=sums)


@dataclass(frozen=True)
class DecoderParams:
    queries: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        q = as_mat(self.queries, "queries")
        c = q.shape[1]
        for name in ("w_q", "w_k", "w_v"):
            m = as_mat(getattr(self, name), name)
            if m.shape != (c, c):
                raise DimMismatch(f"{name} must be {c}x{c}, got {m.shape}")
            object.__setattr__(self, name, m)
        object.__setattr__(self, "queries", q)

    @classmethod
    def identity(cls, queries) -> "DecoderParams":
        q = np.asarray(queries, dtype=np.float64)
        eye = np.eye(q.shape[1])
        return cls(q, eye, eye, eye)

    @classmethod
    def random(cls, num_queries: int, dim: int, seed: int = 0) -> "DecoderParams":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(dim)
        return cls(
            rng.normal(size=(num_queries, dim)),
            rng.normal(scale=scale, size=(dim, dim)),
            rng.normal(scale=scale, size=(dim, dim)),
            rng.normal(scale=scale, size=(dim, dim)),
        )


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


def attention_weights(z: np.ndarray, dec: DecoderParams) -> np.ndarray:
    """Row-stochastic attention matrix, shape (N_q, T)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != dec.queries.shape[1]:
        raise DimMismatch(f"Z has shape {z.shape}, decoder expects dim {dec.queries.shape[1]}")
    q = dec.queries @ dec.w_q
    k = z @ dec.w_k
    return _softmax_rows(q @ k.T / np.sqrt(z.shape[1]))


def decode(z: np.ndarray, dec: DecoderParams) -> np.ndarray:
    """Cross-attend the queries over Z (keys and values); returns X, shape (N_q, C)."""
    a = attention_weights(z, dec)
    return a @ (np.asarray(z, dtype=np.float64) @ dec.w_v)


# -- file formats -----------------------------------------------------------

def stack_to_json(stack: LayerFeatureStack) -> dict:
    L, T, C = stack.features.shape
    return {"layers": L, "tokens": T, "dim": C,
            "data": [layer.reshape(-1).tolist() for layer in stack.features]}


def stack_from_json(obj: dict) -> LayerFeatureStack:
    try:
        L, T, C = int(obj["layers"]), int(obj["tokens"]), int(obj["dim"])
        data = obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"feature stack needs layers/tokens/dim/data: {exc}") from None
    if L < 1 or T < 1 or C < 1:
        raise SchemaError("layers, tokens and dim must be positive")
    if not isinstance(data, list) or len(data) != L:
        raise SchemaError(f"expected {L} layers in data")
    layers = []
    for i, layer in enumerate(data):
        arr = np.array(layer, dtype=np.float64)
        # accept flat row-major T*C or nested T x C per layer
        if arr.shape == (T * C,):
            arr = arr.reshape(T, C)
        if arr.shape != (T, C):
            raise SchemaError(f"layer {i + 1} has shape {arr.shape}, expected ({T}, {C}) or ({T * C},)")
        layers.append(arr)
    return LayerFeatureStack(np.stack(layers))


def load_stack(path) -> LayerFeatureStack:
    with open(path) as fh:
        return stack_from_json(json.load(fh))


def save_stack(stack: LayerFeatureStack, path) -> None:
    Path(path).write_text(json.dumps(stack_to_json(stack)))


def matrix_to_json(m: np.ndarray) -> dict:
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": np.asarray(m).tolist()}


def decoder_from_json(obj: dict) -> DecoderParams:
    try:
        return DecoderParams(obj["queries"], obj["w_q"], obj["w_k"], obj["w_v"])
    except KeyError as exc:
        raise SchemaError(f"decoder params missing {exc}") from None

