"""Minibatch CTC training with AdaDelta."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..ctc import ctc_loss_and_grad
from .arch import LayerSpec
from .model import ModelParams, backward, forward, init_params
from .optim import OptimizerState, adadelta_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    features: object  # (C, H, W) array, FeatureMaps, or anything with .dense()
    label: tuple[int, ...]

    def dense(self) -> np.ndarray:
        f = self.features
        if hasattr(f, "dense"):
            return f.dense()
        return getattr(f, "values", f)


@dataclass
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 8
    seed: int = 0
    rho: float = 0.9
    eps: float = 1e-6
    lr: float = 1.0
    log_every: int = 50


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    diverged: bool = False
    skipped: int = 0


def sample_loss_and_grads(params: ModelParams, example: Example):
    """CTC loss of one example and its parameter gradients (None if impossible)."""
    post, cache = forward(params, example.dense(), "train")
    loss, _, occ = ctc_loss_and_grad(post, example.label)
    if not math.isfinite(loss):
        return loss, None
    return loss, backward(params, cache, dlogits=post - occ)


def _accumulate(total, grads, scale):
    if total is None:
        return [{k: v * scale for k, v in g.items()} for g in grads]
    for t, g in zip(total, grads):
        for k, v in g.items():
            t[k] += v * scale
    return total


def train(dataset: Sequence[Example], arch: Sequence[LayerSpec], config: TrainConfig = TrainConfig(),
          params: ModelParams | None = None,
          callback: Callable[[int, float, ModelParams], None] | None = None) -> TrainResult:
    """Minimize the summed negative log-likelihood of the labels.

    Each iteration draws ``batch_size`` examples (reshuffled every epoch),
    averages their gradients in a fixed order and takes one AdaDelta step.
    Examples whose label cannot be aligned are skipped.  A non-finite loss
    stops training and returns the last parameters that produced a finite one.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if params is None:
        params = init_params(arch, dataset[0].dense().shape[0], config.seed)
    opt = OptimizerState.for_params(params, config.rho, config.eps)
    rng = np.random.default_rng([config.seed, 1])
    result = TrainResult(params)
    order: list[int] = []
    last_good = params.copy()
    for it in range(config.iterations):
        batch = []
        while len(batch) < config.batch_size:
            if not order:
                order = list(rng.permutation(len(dataset)))
            batch.append(order.pop())
        total, losses = None, []
        for idx in batch:
            loss, grads = sample_loss_and_grads(params, dataset[idx])
            if math.isinf(loss) and loss > 0:
                result.skipped += 1
                log.warning("skipping example %d: label cannot be aligned", idx)
                continue
            if not math.isfinite(loss):
                losses = [math.nan]
                break
            losses.append(loss)
            total = _accumulate(total, grads, 1.0 / config.batch_size)
        mean = float(np.mean(losses)) if losses else 0.0
        if not math.isfinite(mean):
            log.error("loss diverged at iteration %d; restoring last good parameters", it)
            result.params = last_good
            result.diverged = True
            return result
        result.losses.append(mean)
        if total is not None:
            last_good = params.copy()
            if not adadelta_step(params, total, opt, config.lr):
                log.warning("rejected non-finite gradient at iteration %d", it)
        params.iteration += 1
        if config.log_every and (it + 1) % config.log_every == 0:
            window = result.losses[-config.log_every:]
            log.info("iteration %d  loss %.4f", it + 1, sum(window) / len(window))
        if callback is not None:
            callback(it, mean, params)
    return result
