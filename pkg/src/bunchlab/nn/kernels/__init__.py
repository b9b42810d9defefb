"""Kernel backend selection.

Two interchangeable implementations of the numeric hot spots exist: a
compiled Cython extension (``_speedups``) specialized for the small tensors
that dominate per-event computation, and a pure numpy fallback.  The backend
is chosen once at import: the compiled one when available, unless overridden
with ``BUNCHLAB_KERNELS=pure|compiled``.

Call sites must access kernels as module attributes (``kernels.dense_fwd``)
so that :func:`use` can swap implementations, which the benchmark and the
cross-backend tests rely on.
"""

from __future__ import annotations

import os

from . import pure

_API = (
    "dense_fwd",
    "dense_bwd",
    "tanh_fwd",
    "tanh_bwd",
    "sigmoid_fwd",
    "sigmoid_bwd",
    "leaky_relu_fwd",
    "leaky_relu_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "adam_step",
)

try:
    from . import _speedups  # noqa: F401

    HAVE_COMPILED = True
except ImportError:
    _speedups = None
    HAVE_COMPILED = False

BACKEND = "pure"


def available_backends() -> tuple[str, ...]:
    return ("pure", "compiled") if HAVE_COMPILED else ("pure",)


def use(name: str) -> None:
    """Route the kernel API through the named backend."""
    global BACKEND
    if name == "pure":
        impl = pure
    elif name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built in this installation")
        impl = _speedups
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _API:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


_requested = os.environ.get("BUNCHLAB_KERNELS", "auto")
if _requested == "auto":
    use("compiled" if HAVE_COMPILED else "pure")
else:
    use(_requested)
