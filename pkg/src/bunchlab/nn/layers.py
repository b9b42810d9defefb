"""Named parameter sets and plain MLPs built on the autodiff core."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, dense, sigmoid, tanh


class ParameterSet:
    """Ordered mapping name -> trainable Tensor with frozen shapes."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradient per parameter; zeros for parameters the loss never touched."""
        return {
            name: (np.zeros_like(t.data) if t.grad is None else t.grad)
            for name, t in self._params.items()
        }

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        return out

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            src = values[name]
            if src.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {src.shape} vs {t.data.shape}"
                )
            t.data = np.array(src, dtype=np.float64)

    def set_zero(self) -> None:
        for t in self._params.values():
            t.data = np.zeros_like(t.data)


def init_dense(ps: ParameterSet, rng: np.random.Generator | None, name: str, fan_in: int, fan_out: int):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weight and bias.

    ``rng=None`` allocates zeros (used for containers that load stored values).
    """
    if rng is None:
        W = ps.add(f"{name}.w", np.zeros((fan_in, fan_out)))
        b = ps.add(f"{name}.b", np.zeros((fan_out,)))
        return W, b
    bound = 1.0 / np.sqrt(fan_in)
    W = ps.add(f"{name}.w", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    b = ps.add(f"{name}.b", rng.uniform(-bound, bound, size=(fan_out,)))
    return W, b


class Mlp:
    """Dense stack with tanh hidden activations and a configurable head.

    head: "linear" | "sigmoid"
    """

    def __init__(self, ps: ParameterSet, rng: np.random.Generator, prefix: str,
                 dims: list[int], head: str = "linear"):
        if head not in ("linear", "sigmoid"):
            raise ValueError(f"unknown head {head!r}")
        self.ps = ps
        self.prefix = prefix
        self.dims = list(dims)
        self.head = head
        for i, (din, dout) in enumerate(zip(dims, dims[1:])):
            init_dense(ps, rng, f"{prefix}.l{i}", din, dout)

    def forward_pre_head(self, x: Tensor) -> Tensor:
        n_layers = len(self.dims) - 1
        h = x
        for i in range(n_layers):
            h = dense(h, self.ps[f"{self.prefix}.l{i}.w"], self.ps[f"{self.prefix}.l{i}.b"])
            if i < n_layers - 1:
                h = tanh(h)
        return h

    def forward(self, x: Tensor) -> Tensor:
        h = self.forward_pre_head(x)
        if self.head == "sigmoid":
            h = sigmoid(h)
        return h


def mlp_forward(mlp: Mlp, x: Tensor) -> Tensor:
    return mlp.forward(x)
