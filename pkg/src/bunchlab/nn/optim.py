"""Adam optimizer and soft target-network blending."""

from __future__ import annotations

import numpy as np

from . import kernels
from .layers import ParameterSet


class Adam:
    def __init__(self, params: ParameterSet, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} shape {p.data.shape}"
                )
            kernels.adam_step(
                p.data, np.ascontiguousarray(g), self.m[name], self.v[name],
                self.t, self.lr, self.beta1, self.beta2, self.eps,
            )

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k] = np.array(state["m"][k], dtype=np.float64).reshape(self.m[k].shape)
            self.v[k] = np.array(state["v"][k], dtype=np.float64).reshape(self.v[k].shape)


def adam_step_single(p, g, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on a single array; ``state`` is a dict with m, v, t."""
    state["t"] += 1
    kernels.adam_step(p, g, state["m"], state["v"], state["t"], lr, beta1, beta2, eps)


def soft_update(target: ParameterSet, source: ParameterSet, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, parameter-wise."""
    if target.names() != source.names():
        raise ValueError("target and source parameter sets do not match")
    for name, t in target.items():
        s = source[name]
        if t.data.shape != s.data.shape:
            raise ValueError(f"shape mismatch for {name!r}")
        t.data = (1.0 - tau) * t.data + tau * s.data
