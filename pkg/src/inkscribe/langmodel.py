"""Character n-gram language models with backoff and ARPA persistence.

Probabilities are stored as log10 values, as in ARPA files.  Every text
line is scored between ``<s>`` and ``</s>``; symbols outside the vocabulary
score as ``<unk>``.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
LOG10_ZERO = -99.0
GT_MAX_COUNT = 5
MAX_ORDER = 3


class ArpaFormatError(ValueError):
    pass


@dataclass
class NGramModel:
    order: int
    vocab: tuple[str, ...]
    # probs[m - 1]: m-gram tuple -> log10 P(last | rest)
    probs: list[dict[tuple[str, ...], float]]
    # backoff log10 weights keyed by context tuple (orders 1 .. n-1)
    backoffs: dict[tuple[str, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must be in 1..{MAX_ORDER}")
        self._known = set(self.vocab)

    @property
    def start_state(self) -> tuple[str, ...]:
        return (BOS,)[: self.order - 1]

    def map_word(self, word: str) -> str:
        return word if word in self._known else UNK

    def cond_logprob(self, context: Sequence[str], word: str) -> float:
        """log10 P(word | context) with ARPA backoff."""
        word = self.map_word(word)
        ctx = tuple(context)[max(0, len(context) - self.order + 1):]
        acc = 0.0
        for start in range(len(ctx) + 1):
            h = ctx[start:]
            p = self.probs[len(h)].get(h + (word,))
            if p is not None:
                return acc + p
            acc += self.backoffs.get(h, 0.0)
        return -math.inf

    def advance(self, state: tuple[str, ...], word: str) -> tuple[float, tuple[str, ...]]:
        lp = self.cond_logprob(state, word)
        if self.order == 1:
            return lp, ()
        return lp, (state + (self.map_word(word),))[-(self.order - 1):]

    def end_logprob(self, state: tuple[str, ...]) -> float:
        return self.cond_logprob(state, EOS)

    def predicted_vocab(self) -> list[str]:
        return [w for w in self.vocab if w != BOS]


def lm_logprob(model: NGramModel, seq: Iterable[str]) -> float:
    """log10 probability of one line, boundary markers included."""
    state = model.start_state
    total = 0.0
    for w in seq:
        lp, state = model.advance(state, w)
        total += lp
    return total + model.end_logprob(state)


def perplexity(model: NGramModel, corpus: Iterable[Sequence[str]]) -> float:
    total, n = 0.0, 0
    for line in corpus:
        total += lm_logprob(model, line)
        n += len(line) + 1
    return 10 ** (-total / n)


# ---------------------------------------------------------------------------
# training


def _count(corpus: Sequence[Sequence[str]], order: int) -> list[Counter]:
    counts = [Counter() for _ in range(order)]
    for line in corpus:
        toks = (BOS,) + tuple(line) + (EOS,)
        for m in range(1, order + 1):
            for i in range(len(toks) - m + 1):
                gram = toks[i:i + m]
                if m == 1 and gram[0] == BOS:
                    continue
                counts[m - 1][gram] += 1
    return counts


def good_turing_discounts(counts: Iterable[int], max_count: int = GT_MAX_COUNT) -> dict[int, float]:
    """Katz discount ratios d_r for 1 <= r <= max_count.

    Uses the Good-Turing estimate r* = (r+1) n_{r+1} / n_r renormalized so
    counts above ``max_count`` stay undiscounted.  Where count-of-counts make
    that ill-defined, absolute discounting with D = n1 / (n1 + 2 n2) (or 0.5)
    is used instead.
    """
    nr = Counter(c for c in counts if c <= max_count + 1)
    n1 = nr[1]
    common = (max_count + 1) * nr[max_count + 1] / n1 if n1 else None
    if n1 and nr[2]:
        absolute = n1 / (n1 + 2 * nr[2])
    else:
        absolute = 0.5
    disc = {}
    for r in range(1, max_count + 1):
        d = None
        if common is not None and nr[r] and common < 1:
            rstar = (r + 1) * nr[r + 1] / nr[r]
            d = (rstar / r - common) / (1 - common)
        if d is None or not 0 < d < 1:
            d = (r - absolute) / r
        disc[r] = d
    return disc


def train_ngram(corpus: Sequence[Sequence[str]], order: int = 2, smoothing: str = "katz",
                k: float = 1.0, vocab: Iterable[str] = ()) -> NGramModel:
    """Estimate an n-gram model.

    ``smoothing`` is ``"katz"`` (Good-Turing discounted counts with backoff)
    or ``"addk"`` (add-``k`` estimates for every context seen in training,
    unseen contexts backing off).  ``vocab`` adds symbols that may not occur
    in ``corpus``.
    """
    corpus = [tuple(line) for line in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    if smoothing not in ("katz", "addk"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if k < 0:
        raise ValueError("k must be non-negative")
    symbols = sorted({w for line in corpus for w in line} | set(vocab) - {BOS, EOS, UNK})
    full_vocab = (BOS, EOS, UNK) + tuple(symbols)
    predicted = full_vocab[1:]
    counts = _count(corpus, order)

    model = NGramModel(order, full_vocab, [dict() for _ in range(order)], {})
    uni = counts[0]
    total = sum(uni.values())
    model.probs[0][(BOS,)] = -math.inf
    if smoothing == "addk":
        ku = k if k > 0 else 1.0  # keep every unigram above zero
        for w in predicted:
            model.probs[0][(w,)] = math.log10((uni[(w,)] + ku) / (total + ku * len(predicted)))
    else:
        disc = good_turing_discounts(uni.values())
        p = {w: uni[(w,)] * disc.get(uni[(w,)], 1.0) / total for w in predicted if uni[(w,)]}
        unseen = [w for w in predicted if not uni[(w,)]]
        left = 1.0 - sum(p.values())
        if unseen and left <= 1e-12:
            p = {w: v * total / (total + 1) for w, v in p.items()}
            left = 1.0 / (total + 1)
        if not unseen:
            s = sum(p.values())
            p = {w: v / s for w, v in p.items()}
        for w in predicted:
            model.probs[0][(w,)] = math.log10(p[w] if w in p else left / len(unseen))

    for m in range(2, order + 1):
        by_ctx: dict[tuple, dict[str, int]] = defaultdict(dict)
        for gram, c in counts[m - 1].items():
            by_ctx[gram[:-1]][gram[-1]] = c
        disc = good_turing_discounts(counts[m - 1].values()) if smoothing == "katz" else {}
        for h in sorted(by_ctx):
            follow = by_ctx[h]
            ch = sum(follow.values())
            if smoothing == "addk":
                for w in predicted:
                    p = (follow.get(w, 0) + k) / (ch + k * len(predicted))
                    model.probs[m - 1][h + (w,)] = math.log10(p) if p > 0 else -math.inf
                continue
            p = {w: c * disc.get(c, 1.0) / ch for w, c in follow.items()}
            left = 1.0 - sum(p.values())
            if left <= 1e-12:
                # nothing was discounted: keep one pseudo-count for unseen symbols
                p = {w: v * ch / (ch + 1) for w, v in p.items()}
                left = 1.0 / (ch + 1)
            lower = sum(10 ** model.cond_logprob(h[1:], w) for w in p)
            for w, v in p.items():
                model.probs[m - 1][h + (w,)] = math.log10(v)
            if lower < 1.0:
                model.backoffs[h] = math.log10(left / (1.0 - lower))
    return model


# ---------------------------------------------------------------------------
# ARPA I/O


def _fmt(v: float) -> str:
    return f"{LOG10_ZERO:.1f}" if v == -math.inf or v <= LOG10_ZERO else f"{v:.7f}"


def format_arpa(model: NGramModel) -> str:
    out = ["", "\\data\\"]
    for m in range(1, model.order + 1):
        out.append(f"ngram {m}={len(model.probs[m - 1])}")
    for m in range(1, model.order + 1):
        out += ["", f"\\{m}-grams:"]
        for gram in sorted(model.probs[m - 1]):
            fields = [_fmt(model.probs[m - 1][gram]), " ".join(gram)]
            if m < model.order and gram in model.backoffs:
                fields.append(_fmt(model.backoffs[gram]))
            out.append("\t".join(fields))
    out += ["", "\\end\\", ""]
    return "\n".join(out)


def save_arpa(model: NGramModel, path) -> None:
    Path(path).write_text(format_arpa(model), encoding="utf-8")


def _parse_float(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ArpaFormatError(f"line {lineno}: bad number {tok!r}") from None
    return -math.inf if v <= LOG10_ZERO else v


def parse_arpa(text: str) -> NGramModel:
    lines = text.splitlines()
    declared: dict[int, int] = {}
    probs: dict[int, dict] = {}
    backoffs: dict[tuple, float] = {}
    section = None
    ended = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if ended:
            raise ArpaFormatError(f"line {lineno}: content after \\end\\")
        if line == "\\data\\":
            section = "data"
            continue
        if line == "\\end\\":
            ended = True
            continue
        head = re.fullmatch(r"\\(\d+)-grams:", line)
        if head:
            section = int(head.group(1))
            if section not in declared:
                raise ArpaFormatError(f"line {lineno}: section {section} not declared in \\data\\")
            probs[section] = {}
            continue
        if line.startswith("\\"):
            raise ArpaFormatError(f"line {lineno}: unknown section header {line!r}")
        if section == "data":
            m = re.fullmatch(r"ngram\s+(\d+)\s*=\s*(\d+)", line)
            if not m:
                raise ArpaFormatError(f"line {lineno}: malformed count line {line!r}")
            declared[int(m.group(1))] = int(m.group(2))
            continue
        if not isinstance(section, int):
            raise ArpaFormatError(f"line {lineno}: entry outside an n-gram section")
        toks = line.split()
        if len(toks) not in (section + 1, section + 2):
            raise ArpaFormatError(f"line {lineno}: expected {section} words")
        gram = tuple(toks[1:section + 1])
        probs[section][gram] = _parse_float(toks[0], lineno)
        if len(toks) == section + 2:
            backoffs[gram] = _parse_float(toks[-1], lineno)
    if not ended:
        raise ArpaFormatError("missing \\end\\ marker")
    if not declared:
        raise ArpaFormatError("missing \\data\\ section")
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        raise ArpaFormatError("n-gram orders must be contiguous from 1")
    for m, n in declared.items():
        if len(probs.get(m, {})) != n:
            raise ArpaFormatError(f"{m}-gram count {len(probs.get(m, {}))} != declared {n}")
    vocab = [BOS, EOS, UNK]
    vocab += sorted({g[0] for g in probs[1]} - set(vocab))
    return NGramModel(order, tuple(vocab), [probs[m] for m in range(1, order + 1)], backoffs)


def load_arpa(path) -> NGramModel:
    return parse_arpa(Path(path).read_text(encoding="utf-8"))
