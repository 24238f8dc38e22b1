"""AdaDelta."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    rho: float = 0.9
    eps: float = 1e-6
    # per layer, per parameter name: running mean of g^2 and of update^2
    sq_grad: list[dict[str, np.ndarray]] = field(default_factory=list)
    sq_update: list[dict[str, np.ndarray]] = field(default_factory=list)
    rejected: int = 0

    @classmethod
    def for_params(cls, params, rho: float = 0.9, eps: float = 1e-6) -> OptimizerState:
        zeros = [{k: np.zeros_like(v) for k, v in w.items()} for w in params.weights]
        return cls(rho, eps, zeros, [{k: v.copy() for k, v in z.items()} for z in zeros])


def adadelta_step(params, grads, state: OptimizerState, lr: float = 1.0) -> bool:
    """Apply one AdaDelta update in place.

    A step with any non-finite gradient is rejected: nothing changes, the
    rejection counter is bumped and False is returned.
    """
    for g in grads:
        for v in g.values():
            if not np.all(np.isfinite(v)):
                state.rejected += 1
                return False
    rho, eps = state.rho, state.eps
    for w, g, eg, ex in zip(params.weights, grads, state.sq_grad, state.sq_update):
        for name, grad in g.items():
            eg[name] *= rho
            eg[name] += (1 - rho) * grad * grad
            step = -np.sqrt(ex[name] + eps) / np.sqrt(eg[name] + eps) * grad
            ex[name] *= rho
            ex[name] += (1 - rho) * step * step
            w[name] += lr * step
    return True
