"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import ParameterSet
from .tensor import Tape


@dataclass
class GradReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    worst_param: str = ""

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def gradient_check(
    forward,
    params: ParameterSet,
    eps: float = 1e-5,
    analytic: dict[str, np.ndarray] | None = None,
) -> GradReport:
    """Compare tape gradients of a scalar ``forward()`` against central differences.

    ``forward`` must be deterministic and close over ``params``.  Passing a
    precomputed ``analytic`` gradient dict (e.g. a corrupted one) lets tests
    verify that the report flags disagreement.
    """
    if analytic is None:
        params.zero_grad()
        with Tape() as tape:
            loss = forward()
            tape.backward(loss)
        analytic = params.gradients()
        params.zero_grad()

    report = GradReport(max_rel_error=0.0)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(forward().data.reshape(()))
            flat[i] = orig - eps
            f_minus = float(forward().data.reshape(()))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            worst = max(worst, _rel_err(float(a_flat[i]), numeric))
        report.per_param[name] = worst
        if worst > report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = name
    return report
