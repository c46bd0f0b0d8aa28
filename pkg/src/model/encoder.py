"""Feed-forward encoder producing unit-norm embeddings, plus the relation proxy table.

Proxy row 0 is the none-class proxy c_0; rows 1..K belong to the predefined
classes. Proxies are stored raw and normalized whenever they are read.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.autodiff import graph as ad
from src.errors import UsageError

DEFAULT_DIMS = (32, 64, 64, 32)


@dataclass(frozen=True)
class ModelParams:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    proxies: np.ndarray

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def hidden_dims(self) -> list[int]:
        return self.dims[1:-1]

    @property
    def num_classes(self) -> int:
        return self.proxies.shape[0] - 1

    def to_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{layer}"] = w
            out[f"b{layer}"] = b
        out["proxies"] = self.proxies
        return out

    @classmethod
    def from_dict(cls, arrays: dict[str, np.ndarray]) -> "ModelParams":
        layers = sum(1 for key in arrays if key.startswith("w"))
        try:
            weights = tuple(np.array(arrays[f"w{k}"], dtype=np.float64) for k in range(layers))
            biases = tuple(np.array(arrays[f"b{k}"], dtype=np.float64) for k in range(layers))
            proxies = np.array(arrays["proxies"], dtype=np.float64)
        except KeyError as exc:
            raise UsageError(f"missing parameter array {exc}") from exc
        params = cls(weights=weights, biases=biases, proxies=proxies)
        params.validate()
        return params

    def validate(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise UsageError("params need matching, non-empty weight and bias lists")
        prev = self.weights[0].shape[0]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or w.shape[0] != prev or b.shape != (w.shape[1],):
                raise UsageError("inconsistent layer shapes in params")
            prev = w.shape[1]
        if self.proxies.ndim != 2 or self.proxies.shape[1] != prev or self.proxies.shape[0] < 2:
            raise UsageError("proxy table must have K+1 rows of the embedding width")
        for array in (*self.weights, *self.biases, self.proxies):
            if not np.all(np.isfinite(array)):
                raise UsageError("params contain non-finite values")


@dataclass(frozen=True)
class ParamNodes:
    """Graph inputs for one forward/backward pass over ``ModelParams``."""

    weights: tuple[ad.Node, ...]
    biases: tuple[ad.Node, ...]
    proxies: ad.Node

    @classmethod
    def from_params(cls, params: ModelParams) -> "ParamNodes":
        return cls(
            weights=tuple(ad.param(w, f"w{k}") for k, w in enumerate(params.weights)),
            biases=tuple(ad.param(b, f"b{k}") for k, b in enumerate(params.biases)),
            proxies=ad.param(params.proxies, "proxies"),
        )

    def as_mapping(self) -> dict[str, ad.Node]:
        out: dict[str, ad.Node] = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        out["proxies"] = self.proxies
        return out


@dataclass(frozen=True)
class DropoutMask:
    """Inverted-dropout keep mask per hidden layer; entries are 0 or 1/(1-rate)."""

    layers: tuple[np.ndarray, ...]
    rate: float


def init_params(rng_seed: int, dims: Sequence[int], num_classes: int) -> ModelParams:
    dims = list(dims)
    if len(dims) < 2:
        raise UsageError("dims must list at least an input and an embedding width")
    if any(d < 1 for d in dims) or num_classes < 1:
        raise UsageError("all dims and the class count must be >= 1")

    rng = np.random.default_rng(rng_seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    raw = rng.standard_normal((num_classes + 1, dims[-1]))
    proxies = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return ModelParams(weights=tuple(weights), biases=tuple(biases), proxies=proxies)


def sample_mask(
    rng: np.random.Generator,
    rate: float,
    hidden_dims: Sequence[int],
    rows: int | None = None,
) -> DropoutMask:
    """Draw a mask per hidden layer; ``rows`` gives one independent mask per sample."""
    if not 0.0 <= rate < 1.0:
        raise UsageError(f"dropout rate must be in [0, 1), got {rate}")
    layers = []
    for width in hidden_dims:
        shape = (width,) if rows is None else (rows, width)
        if rate == 0.0:
            # rate 0 draws nothing so the rng stream is untouched
            layers.append(np.ones(shape))
        else:
            keep = rng.random(shape) >= rate
            layers.append(keep / (1.0 - rate))
    return DropoutMask(layers=tuple(layers), rate=rate)


def encode_batch(features: np.ndarray, nodes: ParamNodes, mask: DropoutMask | None = None) -> ad.Node:
    """Encode rows of ``features`` into an (n, d_emb) node of unit-norm rows."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    rows = x.shape[0]
    if x.shape[1] != nodes.weights[0].shape[0]:
        raise UsageError(f"feature length {x.shape[1]} != d_in {nodes.weights[0].shape[0]}")
    hidden_layers = len(nodes.weights) - 1
    if mask is not None and len(mask.layers) != hidden_layers:
        raise UsageError(f"mask covers {len(mask.layers)} layers, encoder has {hidden_layers} hidden")

    h = ad.constant(x)
    for layer, (w, b) in enumerate(zip(nodes.weights, nodes.biases)):
        h = ad.add(ad.matmul(h, w), ad.tile(b, rows))
        if layer == hidden_layers:
            break
        h = ad.tanh(h)
        if mask is not None:
            keep = mask.layers[layer]
            if keep.shape[-1] != h.shape[1] or (keep.ndim == 2 and keep.shape[0] != rows):
                raise UsageError("mask shape does not match hidden layer")
            h = ad.mul(h, ad.constant(np.broadcast_to(keep, h.shape)))
    return ad.l2norm(h)


def proxy_table(nodes: ParamNodes) -> ad.Node:
    return ad.l2norm(nodes.proxies)


def encode_pair(features: np.ndarray, params: ModelParams, mask: DropoutMask | None = None) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise UsageError("encode_pair takes a single feature vector")
    return encode_batch(x, ParamNodes.from_params(params), mask).value[0]


def encode(features: np.ndarray, params: ModelParams) -> np.ndarray:
    """Inference-mode embeddings for a feature matrix."""
    return encode_batch(features, ParamNodes.from_params(params)).value


def proxy(params: ModelParams, i: int) -> np.ndarray:
    if not 0 <= i <= params.num_classes:
        raise UsageError(f"proxy index {i} outside 0..{params.num_classes}")
    row = params.proxies[i]
    return row / np.linalg.norm(row)


def decide(embeddings: np.ndarray, raw_proxies: np.ndarray) -> np.ndarray:
    """Boolean (n, K) matrix: class i is present iff c_i.f > c_0.f (ties mean no relation)."""
    embeddings = np.atleast_2d(embeddings)
    proxies = raw_proxies / np.linalg.norm(raw_proxies, axis=1, keepdims=True)
    scores = embeddings @ proxies.T
    return scores[:, 1:] > scores[:, :1]


def predict_labels(features: np.ndarray, params: ModelParams) -> np.ndarray:
    return decide(encode(features, params), params.proxies)


def predict(features: np.ndarray, params: ModelParams) -> set[int]:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise UsageError("predict takes a single feature vector")
    row = predict_labels(x, params)[0]
    return {int(i) + 1 for i in np.flatnonzero(row)}
