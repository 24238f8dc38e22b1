"""Truncated signatures of planar piecewise-linear paths and signature rasters.

A level-``n`` signature is stored flat: level ``k`` occupies ``2**k`` entries
in lexicographic multi-index order (x=0, y=1), levels concatenated from 0 to
``n``, so the total length is ``2**(n + 1) - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ink import Point, TextLineSample

MAX_LEVEL = 4


def signature_dim(n: int) -> int:
    return 2 ** (n + 1) - 1


def _offsets(n: int) -> list[int]:
    return [2**k - 1 for k in range(n + 2)]


@dataclass(frozen=True)
class TruncatedSignature:
    level: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != signature_dim(self.level):
            raise ValueError("coefficient count does not match level")

    def block(self, k: int) -> np.ndarray:
        """Level-``k`` coefficients as a flat array of length ``2**k``."""
        return self.coeffs[2**k - 1:2 ** (k + 1) - 1]

    def tensor(self, k: int) -> np.ndarray:
        return self.block(k).reshape((2,) * k)


def _check_level(n: int) -> None:
    if not 0 <= n <= MAX_LEVEL:
        raise ValueError(f"signature level must be in 0..{MAX_LEVEL}, got {n}")


def _split(coeffs: np.ndarray, n: int) -> list[np.ndarray]:
    off = _offsets(n)
    return [coeffs[..., off[k]:off[k + 1]] for k in range(n + 1)]


def _line_levels(delta: np.ndarray, n: int) -> list[np.ndarray]:
    # delta: (..., 2); level k = delta^{(x)k} / k!
    levels = [np.ones(delta.shape[:-1] + (1,))]
    for k in range(1, n + 1):
        prev = levels[-1]
        levels.append((prev[..., :, None] * delta[..., None, :]).reshape(delta.shape[:-1] + (-1,)) / k)
    return levels


def _product(a: list[np.ndarray], b: list[np.ndarray], n: int) -> list[np.ndarray]:
    out = []
    batch = a[0].shape[:-1]
    for k in range(n + 1):
        acc = np.zeros(batch + (2**k,))
        for i in range(k + 1):
            acc += (a[i][..., :, None] * b[k - i][..., None, :]).reshape(batch + (-1,))
        out.append(acc)
    return out


def line_signature(delta, n: int) -> TruncatedSignature:
    """Closed-form signature of a straight segment with displacement ``delta``."""
    _check_level(n)
    levels = _line_levels(np.asarray(delta, dtype=float), n)
    return TruncatedSignature(n, np.concatenate(levels))


def chen_concat(a: TruncatedSignature, b: TruncatedSignature, n: int | None = None) -> TruncatedSignature:
    """Signature of path ``a`` followed by path ``b`` (truncated tensor product)."""
    n = a.level if n is None else n
    if a.level != n or b.level != n:
        raise ValueError(f"level mismatch: {a.level}, {b.level}, expected {n}")
    levels = _product(_split(a.coeffs, n), _split(b.coeffs, n), n)
    return TruncatedSignature(n, np.concatenate(levels))


def batch_signature(disp: np.ndarray, n: int) -> np.ndarray:
    """Signatures of many paths given as displacement stacks.

    ``disp`` has shape (batch, segments, 2); zero rows are identity segments,
    which is how ragged paths are padded.  Returns (batch, 2**(n+1)-1).
    """
    _check_level(n)
    disp = np.asarray(disp, dtype=float)
    batch = disp.shape[0]
    levels = [np.ones((batch, 1))] + [np.zeros((batch, 2**k)) for k in range(1, n + 1)]
    for j in range(disp.shape[1]):
        seg = _line_levels(disp[:, j], n)
        new = []
        # appending a line: c_k = sum_i a_{k-i} (x) delta^{(x)i} / i!
        for k in range(n + 1):
            acc = levels[k].copy()
            for i in range(1, k + 1):
                acc += (levels[k - i][:, :, None] * seg[i][:, None, :]).reshape(batch, -1)
            new.append(acc)
        levels = new
    return np.concatenate(levels, axis=1)


def path_signature(points: Sequence[Point] | np.ndarray, n: int) -> TruncatedSignature:
    _check_level(n)
    xy = _as_xy(points)
    if len(xy) < 1:
        raise ValueError("path needs at least one point")
    coeffs = batch_signature(np.diff(xy, axis=0)[None], n)[0]
    return TruncatedSignature(n, coeffs)


def _as_xy(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.reshape(-1, 2).astype(float)
    return np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)


# ---------------------------------------------------------------------------
# rasterization


@dataclass(frozen=True)
class FeatureMaps:
    level: int
    values: np.ndarray  # (channels, height, width)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def densify(xy: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Subdivide every segment so consecutive points are at most ``spacing`` apart.

    Original vertices are kept, so corners are not cut.
    """
    if len(xy) < 2:
        return xy.copy()
    out = [xy[:1]]
    for a, b in zip(xy[:-1], xy[1:]):
        pieces = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
        t = np.arange(1, pieces + 1)[:, None] / pieces
        out.append(a + t * (b - a))
    return np.concatenate(out)


def _window_displacements(xy: np.ndarray, radius: int) -> np.ndarray:
    disp = np.diff(xy, axis=0)
    m = len(xy)
    if m < 2 or radius == 0:
        return np.zeros((m, max(2 * radius, 1), 2))
    # point i covers points [i - r, i + r] clipped, i.e. segments i - r .. i + r - 1
    idx = np.arange(m)[:, None] - radius + np.arange(2 * radius)[None, :]
    valid = (idx >= 0) & (idx < m - 1)
    out = disp[np.clip(idx, 0, m - 2)]
    out[~valid] = 0.0
    return out


def rasterize(sample: TextLineSample, n: int, window_radius: int = 4,
              height: int = 128, width: int | None = None) -> FeatureMaps:
    """Render a height-normalized sample into ``2**(n+1)-1`` signature maps.

    Each stroke is resampled to unit pixel spacing.  Every resampled point
    receives the signature of the ``2*window_radius + 1`` points around it
    (clipped at stroke ends), computed in coordinates divided by ``height``.
    Later points overwrite earlier ones on shared pixels.
    """
    if n < 0:
        raise ValueError("signature level must be non-negative")
    _check_level(n)
    if window_radius < 0:
        raise ValueError("window radius must be non-negative")
    dim = signature_dim(n)
    if width is None:
        box = sample.bbox()
        width = 1 if box is None else int(math.floor(max(box[2], 0.0))) + 1
    values = np.zeros((dim, height, width))
    if not sample.strokes:
        return FeatureMaps(n, values)

    flat_idx, sigs = [], []
    for stroke in sample.strokes:
        xy = densify(stroke.as_array())
        rows = np.clip(np.floor(xy[:, 1]).astype(int), 0, height - 1)
        cols = np.floor(xy[:, 0]).astype(int)
        keep = (cols >= 0) & (cols < width)
        if n == 0:
            sig = np.ones((len(xy), 1))
        else:
            sig = batch_signature(_window_displacements(xy / height, window_radius), n)
        flat_idx.append((rows * width + cols)[keep])
        sigs.append(sig[keep])
    flat_idx = np.concatenate(flat_idx)
    sigs = np.concatenate(sigs)
    # last write wins: keep the final occurrence of each pixel
    rev_unique, rev_pos = np.unique(flat_idx[::-1], return_index=True)
    last = len(flat_idx) - 1 - rev_pos
    plane = values.reshape(dim, -1)
    plane[:, rev_unique] = sigs[last].T
    plane[0, rev_unique] = 1.0
    return FeatureMaps(n, values)


def write_pgm(channel: np.ndarray, path) -> None:
    """Dump one channel as an ASCII ``P2`` greymap, min..max mapped to 0..255."""
    lo, hi = float(channel.min()), float(channel.max())
    scaled = np.zeros(channel.shape, dtype=int) if hi == lo else np.rint(
        (channel - lo) / (hi - lo) * 255).astype(int)
    h, w = channel.shape
    lines = ["P2", f"# range {lo!r} {hi!r}", f"{w} {h}", "255"]
    lines += [" ".join(map(str, row)) for row in scaled]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
