"""Checkpoints: a text manifest plus a little-endian float64 blob.

A checkpoint is a directory holding ``manifest.txt`` and ``params.bin``.
The manifest lists the layer chain, metadata and every array's shape in the
order the arrays appear in the blob.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .arch import LayerSpec
from .model import ModelParams

MAGIC = "inkscribe-checkpoint 1"


class CheckpointError(ValueError):
    pass


def _pair(text: str) -> tuple[int, int]:
    a, b = text.split("x")
    return int(a), int(b)


def save_checkpoint(params: ModelParams, path, meta: dict[str, str] | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC, f"in_channels {params.in_channels}", f"seed {params.seed}",
             f"iteration {params.iteration}"]
    for key, value in sorted((meta or {}).items()):
        lines.append(f"meta {key} {value}")
    for layer in params.arch:
        k, s, p = layer.kernel, layer.stride, layer.padding
        lines.append(f"layer {layer.kind} {k[0]}x{k[1]} {s[0]}x{s[1]} {p[0]}x{p[1]} {layer.units}")
    blobs = []
    for idx, name, arr in params.named_arrays():
        shape = ",".join(map(str, arr.shape)) or "-"
        lines.append(f"array {idx} {name} {shape}")
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    (path / "params.bin").write_bytes(b"".join(blobs))
    (path / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    path = Path(path)
    manifest, blob_path = path / "manifest.txt", path / "params.bin"
    if not manifest.is_file() or not blob_path.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    lines = manifest.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MAGIC:
        raise CheckpointError("not a checkpoint manifest")
    blob = blob_path.read_bytes()
    header: dict[str, int] = {}
    meta: dict[str, str] = {}
    arch: list[LayerSpec] = []
    arrays: list[tuple[int, str, tuple[int, ...]]] = []
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] in ("in_channels", "seed", "iteration"):
            header[parts[0]] = int(parts[1])
        elif parts[0] == "meta":
            meta[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "layer":
            kind, k, s, p, units = parts[1:]
            arch.append(LayerSpec(kind, _pair(k), _pair(s), _pair(p), int(units)))
        elif parts[0] == "array":
            shape = () if parts[3] == "-" else tuple(int(v) for v in parts[3].split(","))
            arrays.append((int(parts[1]), parts[2], shape))
        else:
            raise CheckpointError(f"unknown manifest line {line!r}")
    weights: list[dict] = [dict() for _ in arch]
    state: list[dict] = [dict() for _ in arch]
    offset = 0
    for idx, name, shape in arrays:
        n = int(np.prod(shape)) * 8
        if offset + n > len(blob):
            raise CheckpointError("parameter blob is truncated")
        arr = np.frombuffer(blob, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(float)
        offset += n
        if name.startswith("state."):
            state[idx][name[6:]] = arr
        else:
            weights[idx][name] = arr
    if offset != len(blob):
        raise CheckpointError("parameter blob has trailing bytes")
    params = ModelParams(arch, header["in_channels"], weights, state,
                         header.get("seed", 0), header.get("iteration", 0))
    return params, meta
