"""Connectionist temporal classification over per-frame posteriors.

Posteriors are (T, K) arrays whose column 0 is the blank.  Labels and
alignments are sequences of integer class indices.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np

BLANK = 0
BRUTE_FORCE_LIMIT = 10**7


class InstanceTooLarge(ValueError):
    pass


def collapse(alignment: Iterable, blank=BLANK) -> tuple:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = object()
    for sym in alignment:
        if sym != prev and sym != blank:
            out.append(sym)
        prev = sym
    return tuple(out)


def _extended(label: Sequence[int]) -> np.ndarray:
    ext = np.zeros(2 * len(label) + 1, dtype=int)
    ext[1::2] = label
    return ext


def _logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def _log(post):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(post, dtype=float))


def _shift(v: np.ndarray, k: int) -> np.ndarray:
    """v moved k places towards higher (k > 0) or lower (k < 0) indices."""
    out = np.full_like(v, -np.inf)
    if k > 0:
        out[k:] = v[:-k]
    else:
        out[:k] = v[-k:]
    return out


def _lattice(logp: np.ndarray, label: Sequence[int]):
    """Forward and backward log-variables; both include the emission at t."""
    T = logp.shape[0]
    ext = _extended(label)
    S = len(ext)
    emit = logp[:, ext]  # (T, S)
    # skip transition s-2 -> s allowed for labels differing from s-2
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    neg = -np.inf
    alpha = np.full((T, S), neg)
    beta = np.full((T, S), neg)
    if T == 0:
        return alpha, beta, ext
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a1 = _shift(prev, 1)
        a2 = np.where(skip, _shift(prev, 2), neg)
        alpha[t] = np.logaddexp(np.logaddexp(prev, a1), a2) + emit[t]
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b1 = _shift(nxt, -1)
        b2 = np.where(skip_from, _shift(nxt, -2), neg)
        beta[t] = np.logaddexp(np.logaddexp(nxt, b1), b2) + emit[t]
    return alpha, beta, ext


def ctc_logprob(post, label: Sequence[int]) -> float:
    """Natural log of the summed probability of all alignments of ``label``."""
    logp = _log(post)
    T = logp.shape[0]
    label = list(label)
    if T == 0:
        return 0.0 if not label else -math.inf
    alpha, _, _ = _lattice(logp, label)
    return float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if len(alpha[-1]) > 1 else alpha[-1, -1])


def ctc_prob(post, label: Sequence[int]) -> float:
    """Pr(label | posteriors).  Labels that cannot fit in T frames give 0."""
    return math.exp(ctc_logprob(post, label))


def ctc_loss_and_grad(post, label: Sequence[int]):
    """Return ``(loss, dloss/dpost, occupancy)`` with ``loss = -ln Pr(label)``.

    ``occupancy[t, k]`` is the posterior probability that frame t emits k on a
    path of ``label``; ``posteriors - occupancy`` is the gradient with respect
    to pre-softmax logits.  An impossible label yields ``loss = inf`` and
    all-zero gradients.
    """
    post = np.asarray(post, dtype=float)
    logp = _log(post)
    T, K = post.shape
    label = list(label)
    if T == 0:
        loss = 0.0 if not label else math.inf
        return loss, np.zeros_like(post), np.zeros_like(post)
    alpha, beta, ext = _lattice(logp, label)
    ll = np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if alpha.shape[1] > 1 else alpha[-1, -1]
    if np.isnan(ll):
        nan = np.full_like(post, np.nan)
        return math.nan, nan, nan
    if not np.isfinite(ll):
        return math.inf, np.zeros_like(post), np.zeros_like(post)
    # alpha * beta counts the emission at t twice
    ab = alpha + beta - logp[:, ext]
    log_occ = np.full((T, K), -np.inf)
    for k in np.unique(ext):
        log_occ[:, k] = _logsumexp(ab[:, ext == k], axis=1)
    log_occ -= ll
    occ = np.exp(log_occ)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = -np.exp(log_occ - logp)
    grad[occ == 0] = 0.0
    return float(-ll), grad, occ


def ctc_grad(post, label: Sequence[int]) -> np.ndarray:
    """d(-ln Pr(label)) / d posteriors."""
    return ctc_loss_and_grad(post, label)[1]


def greedy_decode(post) -> tuple:
    """Best path: per-frame argmax (lowest index on ties), then collapse."""
    post = np.asarray(post)
    if post.shape[0] == 0:
        return ()
    return tuple(int(k) for k in collapse(post.argmax(axis=1)))


def brute_force_prob(post, label: Sequence[int], limit: int = BRUTE_FORCE_LIMIT) -> float:
    """Literal sum over every alignment whose collapse equals ``label``."""
    post = np.asarray(post, dtype=float)
    T, K = post.shape
    if K**T > limit:
        raise InstanceTooLarge(f"{K}^{T} alignments exceed the limit {limit}")
    target = tuple(label)
    total = 0.0
    for path in itertools.product(range(K), repeat=T):
        if collapse(path) == target:
            total += float(np.prod(post[np.arange(T), path]))
    return total


def brute_force_distribution(post, limit: int = BRUTE_FORCE_LIMIT) -> dict[tuple, float]:
    """Probability of every reachable transcription, by enumeration."""
    post = np.asarray(post, dtype=float)
    T, K = post.shape
    if K**T > limit:
        raise InstanceTooLarge(f"{K}^{T} alignments exceed the limit {limit}")
    dist: dict[tuple, float] = {}
    for path in itertools.product(range(K), repeat=T):
        key = collapse(path)
        dist[key] = dist.get(key, 0.0) + float(np.prod(post[np.arange(T), path]))
    return dist
