"""Layer specifications, architecture presets and receptive-field arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

SPATIAL = ("conv", "pool")
POINTWISE = ("batchnorm", "relu")
SEQUENCE = ("blstm", "dense", "softmax")
KINDS = SPATIAL + POINTWISE + SEQUENCE


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    """One layer.  ``units`` is output channels (conv), cells per direction
    (blstm) or output width (dense); it is unused elsewhere."""

    kind: str
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    units: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ConfigurationError("kernel and stride must be >= 1")
        if min(self.padding) < 0:
            raise ConfigurationError("padding must be >= 0")
        if self.kind in ("conv", "blstm", "dense") and self.units < 1:
            raise ConfigurationError(f"{self.kind} layer needs units >= 1")

    def describe(self) -> str:
        if self.kind in SPATIAL:
            k, s, p = self.kernel, self.stride, self.padding
            text = f"{self.kind} k:{k[0]}x{k[1]} s:{s[0]}x{s[1]} p:{p[0]}x{p[1]}"
            return text + (f" n:{self.units}" if self.kind == "conv" else "")
        if self.kind in ("blstm", "dense"):
            return f"{self.kind} n:{self.units}"
        return self.kind


def conv(units, kernel=(3, 3), stride=(1, 1), padding=(0, 0)) -> LayerSpec:
    return LayerSpec("conv", tuple(kernel), tuple(stride), tuple(padding), units)


def pool(kernel=(2, 2), stride=(2, 2)) -> LayerSpec:
    return LayerSpec("pool", tuple(kernel), tuple(stride))


FULL_CHANNELS = (64, 128, 256, 256, 512, 512)
DESK_CHANNELS = (8, 16, 32, 32, 64, 64)


def fcrn_arch(n_classes: int, channels: Sequence[int] = FULL_CHANNELS, blstm_cells: int = 1024,
              blstm_layers: int = 3, dense_units: int = 2048, dense_layers: int = 2,
              batchnorm_last: int = 4) -> list[LayerSpec]:
    """Four conv/pool blocks, a 3x1 and a 2x2 convolution, then BLSTMs and
    a dense head ending in a softmax over ``n_classes`` (blank included).

    Batch normalization follows the last ``batchnorm_last`` convolutions.
    """
    if len(channels) != 6:
        raise ConfigurationError("six convolution widths required")
    convs = [conv(c, (3, 3), (1, 1), (0, 1)) for c in channels[:4]]
    convs.append(conv(channels[4], (3, 1), (3, 1)))
    convs.append(conv(channels[5], (2, 2)))
    layers: list[LayerSpec] = []
    for i, c in enumerate(convs):
        layers.append(c)
        if i >= len(convs) - batchnorm_last:
            layers.append(LayerSpec("batchnorm"))
        layers.append(LayerSpec("relu"))
        if i < 4:
            layers.append(pool())
    layers += [LayerSpec("blstm", units=blstm_cells) for _ in range(blstm_layers)]
    layers += [LayerSpec("dense", units=dense_units) for _ in range(dense_layers - 1)]
    layers.append(LayerSpec("dense", units=n_classes))
    layers.append(LayerSpec("softmax"))
    return layers


def desk_arch(n_classes: int, blstm_cells: int = 64) -> list[LayerSpec]:
    return fcrn_arch(n_classes, DESK_CHANNELS, blstm_cells=blstm_cells, blstm_layers=2,
                     dense_layers=1)


def micro_arch(n_classes: int = 3) -> list[LayerSpec]:
    """Tiny network for gradient checks; a 6x10 input gives T = 4."""
    return [
        conv(3, (3, 3), (1, 1), (0, 1)),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        pool(),
        conv(4, (2, 2)),
        LayerSpec("relu"),
        LayerSpec("blstm", units=3),
        LayerSpec("dense", units=n_classes),
        LayerSpec("softmax"),
    ]


PRESETS = {
    "full": lambda n_classes: fcrn_arch(n_classes),
    "desk": desk_arch,
    "micro": micro_arch,
}


def spatial_part(layers: Sequence[LayerSpec]) -> list[LayerSpec]:
    """Layers before the first sequence layer."""
    out = []
    for layer in layers:
        if layer.kind in SEQUENCE:
            break
        out.append(layer)
    return out


def _spatial_only(layers: Sequence[LayerSpec]) -> list[LayerSpec]:
    if not layers:
        raise ConfigurationError("empty layer chain")
    for layer in layers:
        if layer.kind in SEQUENCE:
            raise ConfigurationError(f"non-spatial layer {layer.kind!r} in receptive-field chain")
    # pointwise layers have k = s = 1, d = 0 and drop out of the arithmetic
    return [layer for layer in layers if layer.kind in SPATIAL]


def receptive_field(layers: Sequence[LayerSpec]) -> tuple[int, int]:
    """Input region seen by one top unit: r_i = (r_{i+1} - 1) * s_i + k_i."""
    r = [1, 1]
    for layer in reversed(_spatial_only(layers)):
        for ax in range(2):
            r[ax] = (r[ax] - 1) * layer.stride[ax] + layer.kernel[ax]
    return r[0], r[1]


def field_position(layers: Sequence[LayerSpec], top_index: int, top_row: int = 0) -> tuple[float, float]:
    """Input-pixel centre of top unit (top_row, top_index):
    p_i = s_i * p_{i+1} + ((k_i - 1) / 2 - d_i)."""
    p = [float(top_row), float(top_index)]
    for layer in reversed(_spatial_only(layers)):
        for ax in range(2):
            p[ax] = layer.stride[ax] * p[ax] + ((layer.kernel[ax] - 1) / 2 - layer.padding[ax])
    return p[0], p[1]


def output_shape(layers: Sequence[LayerSpec], input_hw: tuple[int, int]) -> tuple[int, int, int | None]:
    """Floor-mode spatial arithmetic; returns (h, w, T).

    ``T`` is the sequence length handed to the first sequence layer, or None
    if the chain has no sequence layers and the output is not one row tall.
    """
    h, w = input_hw
    for layer in spatial_part(layers):
        if layer.kind not in SPATIAL:
            continue
        (kh, kw), (sh, sw), (ph, pw) = layer.kernel, layer.stride, layer.padding
        h = (h + 2 * ph - kh) // sh + 1
        w = (w + 2 * pw - kw) // sw + 1
        if h < 1 or w < 1:
            raise ConfigurationError(
                f"input {input_hw[0]}x{input_hw[1]} is smaller than the receptive field at {layer.describe()}")
    has_sequence = len(spatial_part(layers)) < len(layers)
    if has_sequence and h != 1:
        raise ConfigurationError(f"feature map height {h} != 1 at the sequence boundary")
    return h, w, (w if h == 1 else None)


def min_input_width(layers: Sequence[LayerSpec], height: int) -> int:
    w = 1
    while True:
        try:
            output_shape(layers, (height, w))
            return w
        except ConfigurationError:
            w += 1
            if w > 100000:
                raise
