"""Pen-trajectory data model, ink text files and synthetic handwriting.

Ink files are line oriented UTF-8 text::

    LABEL a b c
    STROKE 0.0,0.0 1.0,1.0
    STROKE 3.5,2.0 4.0,7.25

Records are terminated by a blank line.  Coordinates are written with
``repr`` so that a load/save cycle reproduces canonical files byte for byte.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GLYPH_HEIGHT = 128.0
GLYPH_WIDTH = 64.0
JITTER = 0.1  # fraction of glyph height
MAX_SYMBOLS = 100
DEFAULT_SYMBOLS = 10


class InkFormatError(ValueError):
    """Malformed ink file; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class AlphabetError(KeyError):
    pass


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Stroke:
    points: tuple[Point, ...]

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("a stroke needs at least one point")

    @classmethod
    def from_array(cls, xy) -> Stroke:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return cls(tuple(Point(float(x), float(y)) for x, y in xy))

    def as_array(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.points], dtype=float)


@dataclass(frozen=True)
class TextLineSample:
    strokes: tuple[Stroke, ...]
    label: tuple[str, ...]
    # set when normalize_height had to fall back to translation only
    degenerate: bool = field(default=False, compare=False)

    def bbox(self) -> tuple[float, float, float, float] | None:
        """(xmin, ymin, xmax, ymax), or None without points."""
        if not self.strokes:
            return None
        xy = np.concatenate([s.as_array() for s in self.strokes])
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def transformed(self, scale: float, dx: float, dy: float) -> TextLineSample:
        strokes = tuple(
            Stroke.from_array(s.as_array() * scale + (dx, dy)) for s in self.strokes
        )
        return TextLineSample(strokes, self.label)


@dataclass(frozen=True)
class Alphabet:
    """Ordered symbol set; index 0 is reserved for the CTC blank."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in alphabet")
        for s in self.symbols:
            if not s or any(c.isspace() for c in s):
                raise ValueError(f"invalid symbol name {s!r}")

    @classmethod
    def default(cls, size: int = DEFAULT_SYMBOLS) -> Alphabet:
        if not 1 <= size <= MAX_SYMBOLS:
            raise ValueError(f"alphabet size must be in 1..{MAX_SYMBOLS}")
        if size <= 26:
            return cls(tuple(string.ascii_lowercase[:size]))
        return cls(tuple(f"s{i:02d}" for i in range(size)))

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def size_with_blank(self) -> int:
        return len(self.symbols) + 1

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol) + 1
        except ValueError:
            raise AlphabetError(f"unknown symbol {symbol!r}") from None

    def encode(self, label: Iterable[str]) -> list[int]:
        return [self.index(s) for s in label]

    def decode(self, indices: Iterable[int]) -> tuple[str, ...]:
        out = []
        for i in indices:
            if not 1 <= i <= len(self.symbols):
                raise AlphabetError(f"index {i} is not a symbol")
            out.append(self.symbols[i - 1])
        return tuple(out)


# ---------------------------------------------------------------------------
# file I/O


def _fmt(v: float) -> str:
    return repr(float(v))


def format_ink(samples: Iterable[TextLineSample]) -> str:
    out = []
    for sample in samples:
        out.append("LABEL " + " ".join(sample.label) if sample.label else "LABEL")
        for stroke in sample.strokes:
            pts = " ".join(f"{_fmt(p.x)},{_fmt(p.y)}" for p in stroke.points)
            out.append(f"STROKE {pts}")
        out.append("")
    return "".join(line + "\n" for line in out)


def parse_ink(text: str, alphabet: Alphabet | None = None) -> list[TextLineSample]:
    samples: list[TextLineSample] = []
    label: tuple[str, ...] | None = None
    strokes: list[Stroke] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            if label is not None:
                samples.append(TextLineSample(tuple(strokes), label))
                label, strokes = None, []
            continue
        head, _, rest = line.partition(" ")
        if head == "LABEL":
            if label is not None:
                raise InkFormatError("LABEL before record terminator", lineno)
            label = tuple(rest.split())
            if alphabet is not None:
                for sym in label:
                    if sym not in alphabet.symbols:
                        raise AlphabetError(f"line {lineno}: unknown symbol {sym!r}")
        elif head == "STROKE":
            if label is None:
                raise InkFormatError("STROKE outside a record", lineno)
            pts = []
            for tok in rest.split():
                xs, sep, ys = tok.partition(",")
                try:
                    if not sep:
                        raise ValueError
                    pts.append(Point(float(xs), float(ys)))
                except ValueError:
                    raise InkFormatError(f"bad point {tok!r}", lineno) from None
            if not pts:
                raise InkFormatError("empty stroke", lineno)
            strokes.append(Stroke(tuple(pts)))
        else:
            raise InkFormatError(f"unexpected record line {head!r}", lineno)
    if label is not None:
        samples.append(TextLineSample(tuple(strokes), label))
    return samples


def load_ink(path, alphabet: Alphabet | None = None) -> list[TextLineSample]:
    return parse_ink(Path(path).read_text(encoding="utf-8"), alphabet)


def save_ink(samples: Iterable[TextLineSample], path) -> None:
    Path(path).write_text(format_ink(samples), encoding="utf-8")


def load_corpus(path) -> list[tuple[str, ...]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [tuple(line.split()) for line in lines if line.strip()]


def save_corpus(corpus: Iterable[Sequence[str]], path) -> None:
    Path(path).write_text("".join(" ".join(s) + "\n" for s in corpus), encoding="utf-8")


# ---------------------------------------------------------------------------
# normalization


def normalize_height(sample: TextLineSample, height: float = 128.0) -> TextLineSample:
    """Scale a sample so its bounding box is ``height`` tall, anchored at (0, 0).

    Aspect ratio is preserved.  A sample without vertical extent cannot be
    scaled; it is translated so it sits at ``y = height / 2`` and returned
    with ``degenerate`` set.
    """
    if height <= 0:
        raise ValueError("height must be positive")
    box = sample.bbox()
    if box is None:
        return sample
    xmin, ymin, xmax, ymax = box
    extent = ymax - ymin
    if extent <= 0:
        out = sample.transformed(1.0, -xmin, height / 2 - ymin)
        return TextLineSample(out.strokes, out.label, degenerate=True)
    scale = height / extent
    return sample.transformed(scale, -xmin * scale, -ymin * scale)


# ---------------------------------------------------------------------------
# synthetic glyphs

# Polylines in a unit box, x to the right and y downwards.
_BASE_TEMPLATES: list[list[list[tuple[float, float]]]] = [
    [[(0.5, 0.0), (1.0, 0.25), (1.0, 0.75), (0.5, 1.0), (0.0, 0.75), (0.0, 0.25), (0.5, 0.0)]],
    [[(0.15, 0.2), (0.5, 0.0), (0.5, 1.0)]],
    [[(0.0, 0.2), (0.5, 0.0), (1.0, 0.2), (1.0, 0.4), (0.0, 1.0), (1.0, 1.0)]],
    [[(0.0, 0.0), (1.0, 0.0), (0.35, 0.45), (1.0, 0.7), (0.5, 1.0), (0.0, 0.9)]],
    [[(0.75, 1.0), (0.75, 0.0), (0.0, 0.65), (1.0, 0.65)]],
    [[(1.0, 0.0), (0.0, 0.0), (0.0, 0.45), (0.8, 0.45), (1.0, 0.75), (0.65, 1.0), (0.0, 1.0)]],
    [[(0.85, 0.0), (0.0, 0.6), (0.15, 1.0), (0.85, 1.0), (1.0, 0.7), (0.5, 0.5), (0.0, 0.6)]],
    [[(0.0, 0.0), (1.0, 0.0), (0.3, 1.0)]],
    [[(0.0, 0.0), (1.0, 1.0)], [(1.0, 0.0), (0.0, 1.0)]],
    [[(1.0, 0.4), (0.5, 0.5), (0.0, 0.25), (0.5, 0.0), (1.0, 0.25), (1.0, 1.0)]],
]

_TEMPLATE_SEED = 20170210
_MIN_TEMPLATE_DISTANCE = 0.15


def _resample_polyline(xy: np.ndarray, step: float) -> np.ndarray:
    seg = np.diff(xy, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    total = lengths.sum()
    if total == 0:
        return xy[:1].copy()
    s = np.concatenate([[0.0], np.cumsum(lengths)])
    grid = np.linspace(0.0, total, max(2, int(math.ceil(total / step)) + 1))
    return np.column_stack([np.interp(grid, s, xy[:, 0]), np.interp(grid, s, xy[:, 1])])


def _template_pixels(template) -> list[np.ndarray]:
    return [np.asarray(st, dtype=float) * (GLYPH_WIDTH, GLYPH_HEIGHT) for st in template]


def template_distance(a, b, step: float = 2.0) -> float:
    """Symmetric Hausdorff distance between two templates, in glyph heights."""
    pa = np.concatenate([_resample_polyline(s, step) for s in _template_pixels(a)])
    pb = np.concatenate([_resample_polyline(s, step) for s in _template_pixels(b)])
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()) / GLYPH_HEIGHT)


_TEMPLATES: list = [list(t) for t in _BASE_TEMPLATES]
_TEMPLATE_RNG = np.random.default_rng(_TEMPLATE_SEED)


def glyph_templates(count: int = DEFAULT_SYMBOLS) -> list:
    """The first ``count`` glyph templates; entry ``i`` draws alphabet index ``i + 1``.

    Templates past the hand-drawn ones are random polylines, accepted only if
    they stay ``_MIN_TEMPLATE_DISTANCE`` away from every earlier template.
    """
    if count > MAX_SYMBOLS:
        raise ValueError(f"at most {MAX_SYMBOLS} templates")
    rng = _TEMPLATE_RNG
    while len(_TEMPLATES) < count:
        cand = [
            [tuple(map(float, rng.uniform(0, 1, 2).round(2))) for _ in range(int(rng.integers(3, 6)))]
            for _ in range(int(rng.integers(1, 3)))
        ]
        if all(template_distance(cand, t) > _MIN_TEMPLATE_DISTANCE for t in _TEMPLATES):
            _TEMPLATES.append(cand)
    return _TEMPLATES[:count]


def synth_glyph(symbol: int, seed: int) -> tuple[Stroke, ...]:
    """Render alphabet index ``symbol`` (1-based) with seeded vertex jitter.

    Every template vertex moves by at most ``JITTER * GLYPH_HEIGHT`` pixels.
    """
    if not 1 <= symbol <= MAX_SYMBOLS:
        raise AlphabetError(f"symbol index {symbol} out of range")
    rng = np.random.default_rng([seed, symbol])
    strokes = []
    for xy in _template_pixels(glyph_templates(symbol)[symbol - 1]):
        radius = JITTER * GLYPH_HEIGHT * np.sqrt(rng.uniform(0, 1, len(xy)))
        angle = rng.uniform(0, 2 * np.pi, len(xy))
        xy = xy + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        strokes.append(Stroke.from_array(xy))
    return tuple(strokes)


def glyph_seed(seed: int, position: int) -> int:
    return int(np.random.SeedSequence([seed, position]).generate_state(1)[0])


def synth_line(label: Sequence[str], seed: int, alphabet: Alphabet | None = None) -> TextLineSample:
    """Lay glyphs out left to right with gaps of 0.1-0.5 glyph widths."""
    if not label:
        raise ValueError("label must be non-empty")
    alphabet = alphabet or Alphabet.default()
    rng = np.random.default_rng([seed, 0x11E])
    strokes: list[Stroke] = []
    cursor = 0.0
    for pos, sym in enumerate(label):
        glyph = synth_glyph(alphabet.index(sym), glyph_seed(seed, pos))
        xy = np.concatenate([s.as_array() for s in glyph])
        shift = cursor - xy[:, 0].min() if pos else 0.0
        strokes.extend(Stroke.from_array(s.as_array() + (shift, 0.0)) for s in glyph)
        cursor = xy[:, 0].max() + shift + rng.uniform(0.1, 0.5) * GLYPH_WIDTH
    return TextLineSample(tuple(strokes), tuple(label))


# ---------------------------------------------------------------------------
# synthetic corpora

_SOURCE_SEED = 7919


class MarkovSource:
    """Fixed order-k Markov chain over symbol indices 0..n-1.

    Rows are drawn once from a sparse Dirichlet so that the text has
    exploitable structure for n-gram models.
    """

    def __init__(self, n_symbols: int = DEFAULT_SYMBOLS, order: int = 1,
                 concentration: float = 0.3, source_seed: int = _SOURCE_SEED):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.n_symbols = n_symbols
        self.order = order
        rng = np.random.default_rng([source_seed, n_symbols, order])
        shape = (n_symbols,) * order + (n_symbols,)
        self.transitions = rng.dirichlet(np.full(n_symbols, concentration), size=shape[:-1])

    def sample(self, length: int, rng: np.random.Generator, burn_in: int = 200) -> list[int]:
        ctx = list(rng.integers(0, self.n_symbols, self.order))
        out: list[int] = []
        cdf = np.cumsum(self.transitions, axis=-1)
        for i in range(burn_in + length):
            row = cdf[tuple(ctx)]
            nxt = int(min(np.searchsorted(row, rng.uniform(0, row[-1]), side="right"), self.n_symbols - 1))
            ctx = ctx[1:] + [nxt]
            if i >= burn_in:
                out.append(nxt)
        return out


def synth_corpus(order: int, n_chars: int, seed: int, alphabet_size: int = DEFAULT_SYMBOLS,
                 min_len: int = 2, max_len: int = 6) -> list[tuple[str, ...]]:
    """Lines cut from one stationary run of ``MarkovSource(alphabet_size, order)``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    alphabet = Alphabet.default(alphabet_size)
    source = MarkovSource(alphabet_size, order)
    rng = np.random.default_rng([seed, 0xC0])
    lengths = []
    while sum(lengths) < n_chars:
        lengths.append(int(rng.integers(min_len, max_len + 1)))
    stream = source.sample(sum(lengths), rng)
    lines, pos = [], 0
    for n in lengths:
        lines.append(tuple(alphabet.symbols[i] for i in stream[pos:pos + n]))
        pos += n
    return lines
