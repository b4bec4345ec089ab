"""Adam with bias correction over LayerParams lists."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gvf.numerics.layers import LayerParams


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)  # name -> (mw, vw, mb, vb)

    def slot(self, p: LayerParams):
        if p.name not in self.moments:
            self.moments[p.name] = (np.zeros_like(p.w), np.zeros_like(p.w),
                                    np.zeros_like(p.b), np.zeros_like(p.b))
        return self.moments[p.name]


def adam_update(params: list[LayerParams], state: OptimizerState) -> None:
    """One Adam step over all params; gradients are zeroed afterwards."""
    if not params:
        raise ValueError("adam_update: empty parameter list")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr = state.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for p in params:
        mw, vw, mb, vb = state.slot(p)
        for val, grad, m, v in ((p.w, p.gw, mw, vw), (p.b, p.gb, mb, vb)):
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad * grad
            val -= corr * m / (np.sqrt(v) + state.eps)
        p.zero_grad()
