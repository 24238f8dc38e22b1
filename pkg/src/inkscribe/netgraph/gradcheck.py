"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return g


def rel_error(analytic, numeric, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a||, ||n||, floor).

    The floor keeps gradients that are zero by construction (a bias feeding
    a normalization layer, say) from reporting a relative error of 1.
    """
    a, n = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))
