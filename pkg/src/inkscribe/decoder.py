"""Region-based beam search over CTC posteriors with n-gram fusion.

Frames whose only candidate above the threshold is the blank split the
lattice into regions.  Alignments inside different regions collapse
independently, so each region is enumerated on its own and the resulting
partial transcriptions are concatenated left to right, keeping the best N
hypotheses after every region.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ctc import BLANK, brute_force_distribution
from .langmodel import NGramModel, lm_logprob

LN10 = math.log(10.0)
BRUTE_FORCE_DECODE_LIMIT = 10**6


@dataclass(frozen=True)
class DecodeConfig:
    threshold: float = 0.001
    beam_width: int = 32
    lm_weight: float = 1.0
    length_bonus: float = 0.0
    enum_cap: int = 100_000

    def __post_init__(self):
        if not 0 <= self.threshold < 1:
            raise ValueError("threshold must be in [0, 1)")
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if self.lm_weight < 0:
            raise ValueError("lm weight must be >= 0")


@dataclass(frozen=True)
class Region:
    start: int
    stop: int
    candidates: tuple[tuple[int, ...], ...]

    @property
    def n_alignments(self) -> int:
        return math.prod(len(c) for c in self.candidates)


@dataclass(frozen=True)
class Hypothesis:
    labels: tuple[int, ...]
    acoustic: float  # ln of the summed alignment probability
    lm: float  # log10 LM score so far
    state: tuple[str, ...]
    score: float


def frame_candidates(post, threshold: float) -> list[tuple[int, ...]]:
    """Classes above ``threshold`` per frame; the argmax if none is."""
    post = np.asarray(post)
    out = []
    for row in post:
        cand = tuple(int(k) for k in np.flatnonzero(row > threshold))
        out.append(cand or (int(row.argmax()),))
    return out


def split_regions(candidates: Sequence[Sequence[int]]) -> list[Region]:
    regions, start = [], None
    for t, cand in enumerate(list(candidates) + [(BLANK,)]):
        blank_only = tuple(cand) == (BLANK,)
        if blank_only and start is not None:
            regions.append(Region(start, t, tuple(tuple(c) for c in candidates[start:t])))
            start = None
        elif not blank_only and start is None:
            start = t
    return regions


def region_paths(region: Region, post, cap: int = 100_000, beam_width: int = 32):
    """Pooled log-probabilities of every partial transcription of a region.

    Returns ``(partials, exact)``.  Alignments are expanded frame by frame and
    states with the same collapsed prefix and last label are merged, which
    sums exactly the same alignment products as literal enumeration.  When the
    region has more than ``cap`` alignments only the ``beam_width`` best
    prefixes survive each frame and ``exact`` is False.
    """
    logp = _log(post)
    exact = region.n_alignments <= cap
    # (prefix, last label) -> log prob
    states: dict[tuple[tuple[int, ...], int], float] = {((), -1): 0.0}
    for t, cand in zip(range(region.start, region.stop), region.candidates):
        nxt: dict[tuple[tuple[int, ...], int], float] = {}
        for (prefix, last), lp in states.items():
            for c in cand:
                key = (prefix, c) if c == BLANK or c == last else (prefix + (c,), c)
                v = lp + logp[t, c]
                old = nxt.get(key)
                nxt[key] = v if old is None else np.logaddexp(old, v)
        states = nxt
        if not exact:
            states = _prune_states(states, beam_width)
    partials: dict[tuple[int, ...], float] = {}
    for (prefix, _), lp in states.items():
        old = partials.get(prefix)
        partials[prefix] = lp if old is None else np.logaddexp(old, lp)
    return partials, exact


def _prune_states(states, width):
    pooled: dict[tuple[int, ...], float] = {}
    for (prefix, _), lp in states.items():
        pooled[prefix] = lp if prefix not in pooled else np.logaddexp(pooled[prefix], lp)
    keep = set(sorted(pooled, key=lambda p: (-pooled[p], p))[:width])
    return {k: v for k, v in states.items() if k[0] in keep}


def _log(post):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(post, dtype=float))


def _words(labels, symbols):
    return [symbols[i - 1] if symbols is not None else str(i) for i in labels]


def _combined(acoustic, lm10, length, cfg):
    return acoustic + cfg.lm_weight * LN10 * lm10 + cfg.length_bonus * length


def _ranked(hyps):
    return sorted(hyps, key=lambda h: (-h.score, len(h.labels), h.labels))


def beam_search_hypotheses(post, lm: NGramModel | None = None, cfg: DecodeConfig = DecodeConfig(),
                           symbols: Sequence[str] | None = None) -> list[Hypothesis]:
    """Final hypotheses, best first, with the LM end-of-line term applied."""
    post = np.asarray(post, dtype=float)
    use_lm = lm is not None and cfg.lm_weight > 0
    logp = _log(post)
    cands = frame_candidates(post, cfg.threshold)
    regions = split_regions(cands)
    start = lm.start_state if use_lm else ()
    # blank-only separator frames add the same factor to every hypothesis
    covered = np.zeros(len(post), dtype=bool)
    for r in regions:
        covered[r.start:r.stop] = True
    base = float(logp[~covered, BLANK].sum()) if len(post) else 0.0
    beam = [Hypothesis((), base, 0.0, start, base)]
    for region in regions:
        partials, exact = region_paths(region, post, cfg.enum_cap, cfg.beam_width)
        if not exact:
            warnings.warn(f"region {region.start}:{region.stop} too large to enumerate; "
                          f"using a width-{cfg.beam_width} beam", RuntimeWarning, stacklevel=2)
        merged: dict[tuple[int, ...], Hypothesis] = {}
        for hyp in beam:
            for part, plp in partials.items():
                labels = hyp.labels + part
                acoustic = hyp.acoustic + plp
                old = merged.get(labels)
                if old is not None:
                    acoustic = float(np.logaddexp(old.acoustic, acoustic))
                    lm10, state = old.lm, old.state
                else:
                    lm10, state = hyp.lm, hyp.state
                    if use_lm:
                        for w in _words(part, symbols):
                            lp, state = lm.advance(state, w)
                            lm10 += lp
                merged[labels] = Hypothesis(labels, acoustic, lm10, state,
                                            _combined(acoustic, lm10, len(labels), cfg))
        beam = _ranked(merged.values())[:cfg.beam_width]
    final = []
    for hyp in beam:
        lm10 = hyp.lm + (lm.end_logprob(hyp.state) if use_lm else 0.0)
        final.append(Hypothesis(hyp.labels, hyp.acoustic, lm10, hyp.state,
                                _combined(hyp.acoustic, lm10, len(hyp.labels), cfg)))
    return _ranked(final)


def beam_search(post, lm: NGramModel | None = None, cfg: DecodeConfig = DecodeConfig(),
                symbols: Sequence[str] | None = None) -> tuple[int, ...]:
    return beam_search_hypotheses(post, lm, cfg, symbols)[0].labels


def transcription_score(labels, acoustic, lm: NGramModel | None, cfg: DecodeConfig,
                        symbols: Sequence[str] | None = None) -> float:
    lm10 = 0.0
    if lm is not None and cfg.lm_weight > 0:
        lm10 = lm_logprob(lm, _words(labels, symbols))
    return _combined(acoustic, lm10, len(labels), cfg)


def brute_force_decode(post, lm: NGramModel | None = None, cfg: DecodeConfig = DecodeConfig(),
                       symbols: Sequence[str] | None = None,
                       limit: int = BRUTE_FORCE_DECODE_LIMIT) -> tuple[int, ...]:
    """Exact argmax over all transcriptions of the fused score."""
    post = np.asarray(post, dtype=float)
    if len(post) == 0:
        return ()
    dist = brute_force_distribution(post, limit)
    best = None
    for labels, p in dist.items():
        if p <= 0:
            continue
        score = transcription_score(labels, math.log(p), lm, cfg, symbols)
        key = (-score, len(labels), labels)
        if best is None or key < best:
            best = key
    return tuple(best[2]) if best else ()
