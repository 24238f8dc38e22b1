"""The desk-scale synthetic recognition task, end to end.

Shared by the command line and the acceptance suite: synthesize lines from a
Markov text source, featurize them, train one network per signature level,
then compare greedy decoding with bigram and trigram beam search.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ink
from .ctc import greedy_decode
from .decoder import DecodeConfig, beam_search
from .evaluate import cr_ar
from .langmodel import NGramModel, train_ngram
from .netgraph import Example, ModelParams, TrainConfig, desk_arch, forward, output_shape, train
from .pathsig import rasterize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseMaps:
    """Feature maps kept as their non-zero pixels; most of a line raster is empty."""

    shape: tuple[int, int, int]
    index: np.ndarray  # flat pixel indices
    values: np.ndarray  # (channels, n_pixels)

    @classmethod
    def from_dense(cls, values: np.ndarray) -> SparseMaps:
        C = values.shape[0]
        plane = values.reshape(C, -1)
        idx = np.flatnonzero(np.any(plane != 0, axis=0))
        return cls(values.shape, idx.astype(np.int32), plane[:, idx].astype(np.float32))

    def dense(self) -> np.ndarray:
        C, H, W = self.shape
        out = np.zeros((C, H * W))
        out[:, self.index] = self.values
        return out.reshape(C, H, W)


@dataclass(frozen=True)
class DeskTask:
    alphabet_size: int = 10
    n_train: int = 2000
    n_valid: int = 200
    n_test: int = 200
    min_len: int = 2
    max_len: int = 6
    source_order: int = 2
    corpus_chars: int = 100_000
    height: int = 128
    window_radius: int = 4
    seed: int = 2017

    @property
    def alphabet(self) -> ink.Alphabet:
        return ink.Alphabet.default(self.alphabet_size)


def _labels(task: DeskTask, n: int, stream: int) -> list[tuple[str, ...]]:
    lines = ink.synth_corpus(task.source_order, n * task.max_len, task.seed * 10 + stream,
                             task.alphabet_size, task.min_len, task.max_len)
    return lines[:n]


def make_lines(task: DeskTask, split: str) -> list[ink.TextLineSample]:
    """Height-normalized synthetic lines for ``split`` in train/valid/test."""
    stream, n = {"train": (1, task.n_train), "valid": (2, task.n_valid), "test": (3, task.n_test)}[split]
    out = []
    for i, label in enumerate(_labels(task, n, stream)):
        sample = ink.synth_line(label, ink.glyph_seed(task.seed * 10 + stream, i), task.alphabet)
        out.append(ink.normalize_height(sample, task.height))
    return out


def lm_corpus(task: DeskTask) -> list[tuple[str, ...]]:
    return ink.synth_corpus(task.source_order, task.corpus_chars, task.seed * 10 + 4,
                            task.alphabet_size, task.min_len, task.max_len)


def featurize(samples: Sequence[ink.TextLineSample], sig_level: int, task: DeskTask,
              arch=None) -> list[Example]:
    """Rasterize lines, padding each to at least the network's minimum width."""
    alphabet = task.alphabet
    out = []
    for s in samples:
        fm = rasterize(s, sig_level, task.window_radius, task.height)
        values = fm.values
        if arch is not None:
            values = _pad_to_fit(values, arch)
        out.append(Example(SparseMaps.from_dense(values), tuple(alphabet.encode(s.label))))
    return out


def _pad_to_fit(values: np.ndarray, arch) -> np.ndarray:
    C, H, W = values.shape
    width = W
    while True:
        try:
            output_shape(arch, (H, width))
            break
        except Exception:
            width += 1
    if width == W:
        return values
    return np.pad(values, ((0, 0), (0, 0), (0, width - W)))


def posteriors(params: ModelParams, examples: Sequence[Example]) -> list[np.ndarray]:
    return [forward(params, ex.dense(), "eval")[0] for ex in examples]


def greedy_cr(params: ModelParams, examples: Sequence[Example]) -> tuple[float, float]:
    pairs = [(ex.label, greedy_decode(p)) for ex, p in zip(examples, posteriors(params, examples))]
    return cr_ar(pairs)


def decode_all(posts, lm: NGramModel | None, cfg: DecodeConfig, symbols) -> list[tuple[int, ...]]:
    return [beam_search(p, lm, cfg, symbols) for p in posts]


def tune_lm_weight(posts, labels, lm: NGramModel, base: DecodeConfig, symbols,
                   grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)) -> DecodeConfig:
    """Pick the LM weight with the best CR on held-out posteriors.

    Ties go to the earlier grid entry.
    """
    best, best_cr = base, -1.0
    for w in grid:
        cfg = replace(base, lm_weight=w)
        hyps = decode_all(posts, lm, cfg, symbols)
        cr, _ = cr_ar(list(zip(labels, hyps)))
        if cr > best_cr + 1e-12:
            best, best_cr = cfg, cr
    return best


@dataclass
class DeskResult:
    task: DeskTask
    train_config: TrainConfig
    seconds: float = 0.0
    naive: dict[int, tuple[float, float]] = field(default_factory=dict)  # sig level -> (CR, AR)
    beam: dict[int, tuple[float, float]] = field(default_factory=dict)  # LM order -> (CR, AR)
    lm_weights: dict[int, float] = field(default_factory=dict)
    losses: dict[int, list[float]] = field(default_factory=dict)
    params: dict[int, ModelParams] = field(default_factory=dict)


def run_desk_experiment(task: DeskTask = DeskTask(), train_config: TrainConfig = TrainConfig(),
                        sig_levels: Sequence[int] = (2, 0), lm_level: int = 2,
                        decode: DecodeConfig = DecodeConfig()) -> DeskResult:
    """Train one model per signature level at an equal iteration budget and
    score greedy decoding; then decode the ``lm_level`` model with bigram and
    trigram beam search, weights tuned on the validation split."""
    t0 = time.time()
    result = DeskResult(task, train_config)
    arch = desk_arch(task.alphabet_size + 1)
    lines = {split: make_lines(task, split) for split in ("train", "valid", "test")}
    symbols = task.alphabet.symbols
    valid_posts = test_posts = None
    for level in sig_levels:
        data = {k: featurize(v, level, task, arch) for k, v in lines.items()}
        log.info("sig%d: training on %d lines", level, len(data["train"]))
        res = train(data["train"], arch, replace(train_config))
        result.losses[level] = res.losses
        result.params[level] = res.params
        result.naive[level] = greedy_cr(res.params, data["test"])
        log.info("sig%d: naive CR %.4f AR %.4f", level, *result.naive[level])
        if level == lm_level:
            valid_posts = posteriors(res.params, data["valid"])
            test_posts = posteriors(res.params, data["test"])
            valid_labels = [ex.label for ex in data["valid"]]
            test_labels = [ex.label for ex in data["test"]]
    if test_posts is not None:
        corpus = lm_corpus(task)
        for order in (2, 3):
            lm = train_ngram(corpus, order, "katz", vocab=symbols)
            cfg = tune_lm_weight(valid_posts, valid_labels, lm, decode, symbols)
            hyps = decode_all(test_posts, lm, cfg, symbols)
            result.beam[order] = cr_ar(list(zip(test_labels, hyps)))
            result.lm_weights[order] = cfg.lm_weight
            log.info("order %d LM (weight %.2f): CR %.4f AR %.4f", order, cfg.lm_weight, *result.beam[order])
    result.seconds = time.time() - t0
    return result
