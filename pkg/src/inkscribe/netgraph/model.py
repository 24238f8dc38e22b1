"""Parameter container plus whole-network forward and backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import layers as L
from .arch import SEQUENCE, ConfigurationError, LayerSpec


class MissingCacheError(RuntimeError):
    pass


@dataclass
class ModelParams:
    arch: list[LayerSpec]
    in_channels: int
    weights: list[dict[str, np.ndarray]]
    # batch-norm running statistics, one dict per layer (empty elsewhere)
    state: list[dict[str, np.ndarray]]
    seed: int = 0
    iteration: int = 0

    @property
    def n_classes(self) -> int:
        return self.arch[-2].units

    def copy(self) -> ModelParams:
        return ModelParams(
            list(self.arch), self.in_channels,
            [{k: v.copy() for k, v in w.items()} for w in self.weights],
            [{k: v.copy() for k, v in s.items()} for s in self.state],
            self.seed, self.iteration,
        )

    def named_arrays(self):
        """(layer index, name, array) in manifest order: weights then state."""
        for i, w in enumerate(self.weights):
            for k in sorted(w):
                yield i, k, w[k]
        for i, s in enumerate(self.state):
            for k in sorted(s):
                yield i, "state." + k, s[k]

    def n_parameters(self) -> int:
        return sum(v.size for w in self.weights for v in w.values())


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch: Sequence[LayerSpec], in_channels: int, seed: int = 0) -> ModelParams:
    arch = list(arch)
    if not arch or arch[-1].kind != "softmax" or len(arch) < 2 or arch[-2].kind != "dense":
        raise ConfigurationError("architecture must end in dense + softmax")
    rng = np.random.default_rng(seed)
    weights, state = [], []
    ch, feat, spatial = in_channels, None, True
    for layer in arch:
        w: dict[str, np.ndarray] = {}
        s: dict[str, np.ndarray] = {}
        if layer.kind in SEQUENCE and spatial:
            spatial, feat = False, ch
        if layer.kind == "conv":
            kh, kw = layer.kernel
            w["W"] = _glorot(rng, (layer.units, ch, kh, kw), ch * kh * kw, layer.units * kh * kw)
            w["b"] = np.zeros(layer.units)
            ch = layer.units
        elif layer.kind == "batchnorm":
            if not spatial:
                raise ConfigurationError("batchnorm only supported on feature maps")
            w["gamma"] = np.ones(ch)
            w["beta"] = np.zeros(ch)
            s["running_mean"] = np.zeros(ch)
            s["running_var"] = np.ones(ch)
        elif layer.kind == "blstm":
            H = layer.units
            for d in ("f", "b"):
                w["W" + d] = _glorot(rng, (4 * H, feat + H), feat + H, H)
                w["b" + d] = np.zeros(4 * H)
            feat = 2 * H
        elif layer.kind == "dense":
            w["W"] = _glorot(rng, (layer.units, feat), feat, layer.units)
            w["b"] = np.zeros(layer.units)
            feat = layer.units
        elif layer.kind in ("pool", "relu") and not spatial:
            raise ConfigurationError(f"{layer.kind} after the sequence boundary")
        weights.append(w)
        state.append(s)
    return ModelParams(arch, in_channels, weights, state, seed=seed)


@dataclass
class Cache:
    entries: list = field(default_factory=list)
    posteriors: np.ndarray | None = None


def forward(params: ModelParams, maps, mode: str = "eval"):
    """Run the network on one (C, H, W) feature array.

    Returns ``(posteriors, cache)``; ``cache`` is None in eval mode.  The
    posteriors are a (T, n_classes) array of softmax rows.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    x = getattr(maps, "values", maps)
    if x.ndim != 3 or x.shape[0] != params.in_channels:
        raise ConfigurationError(
            f"expected ({params.in_channels}, H, W) input, got {x.shape}")
    train = mode == "train"
    entries = []
    spatial = True
    for layer, w, s in zip(params.arch, params.weights, params.state):
        if layer.kind in SEQUENCE and spatial:
            if x.shape[1] != 1:
                raise ConfigurationError(f"feature map height {x.shape[1]} != 1 at the sequence boundary")
            spatial = False
            x = x[:, 0, :].T
        kind = layer.kind
        if kind == "conv":
            x, c = L.conv_forward(x, w["W"], w["b"], layer.stride, layer.padding)
        elif kind == "pool":
            x, c = L.pool_forward(x, layer.kernel, layer.stride)
        elif kind == "batchnorm":
            x, c = L.batchnorm_forward(x, w["gamma"], w["beta"], s, train)
        elif kind == "relu":
            c = x > 0
            x = np.where(c, x, 0.0)
        elif kind == "blstm":
            x, c = L.blstm_forward(x, w["Wf"], w["bf"], w["Wb"], w["bb"])
        elif kind == "dense":
            x, c = L.dense_forward(x, w["W"], w["b"])
        else:
            x = L.softmax(x)
            c = x
        if min(x.shape) < 1:
            raise ConfigurationError(f"empty activation after {layer.describe()}")
        entries.append(c)
    if not train:
        return x, None
    return x, Cache(entries, x)


def backward(params: ModelParams, cache: Cache | None, dposteriors=None, dlogits=None):
    """Gradients of a scalar loss, given its derivative with respect to the
    posteriors or, equivalently and more stably, the pre-softmax logits.

    Returns one dict per layer mirroring ``params.weights``.
    """
    if cache is None or not cache.entries:
        raise MissingCacheError("backward needs the cache of a train-mode forward pass")
    if (dposteriors is None) == (dlogits is None):
        raise ValueError("pass exactly one of dposteriors / dlogits")
    grads: list[dict[str, np.ndarray]] = [dict() for _ in params.arch]
    n = len(params.arch)
    if dlogits is not None:
        dx = np.asarray(dlogits, dtype=float)
        start = n - 2
    else:
        dx = L.softmax_backward(np.asarray(dposteriors, dtype=float), cache.posteriors)
        start = n - 2
    first_seq = next(i for i, layer in enumerate(params.arch) if layer.kind in SEQUENCE)
    for idx in range(start, -1, -1):
        layer, w, c = params.arch[idx], params.weights[idx], cache.entries[idx]
        kind = layer.kind
        if kind == "conv":
            dx, grads[idx]["W"], grads[idx]["b"] = L.conv_backward(dx, c, need_dx=idx > 0)
        elif kind == "pool":
            dx = L.pool_backward(dx, c)
        elif kind == "batchnorm":
            dx, grads[idx]["gamma"], grads[idx]["beta"] = L.batchnorm_backward(dx, c)
        elif kind == "relu":
            dx = dx * c
        elif kind == "blstm":
            g = grads[idx]
            dx, g["Wf"], g["bf"], g["Wb"], g["bb"] = L.blstm_backward(dx, c)
        elif kind == "dense":
            dx, grads[idx]["W"], grads[idx]["b"] = L.dense_backward(dx, c, w["W"])
        elif kind == "softmax":
            dx = L.softmax_backward(dx, c)
        if idx == first_seq:
            dx = dx.T[:, None, :]
    return grads
