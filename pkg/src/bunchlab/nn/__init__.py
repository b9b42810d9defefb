from . import kernels
from .gradcheck import GradReport, gradient_check
from .layers import Mlp, ParameterSet, init_dense, mlp_forward
from .optim import Adam, soft_update
from .serialize import load_params_into, params_from_doc, params_to_doc, save_params
from .tensor import (
    Tape,
    Tensor,
    add,
    no_tape,
    as_tensor,
    concat,
    dense,
    leaky_relu,
    matmul,
    mean_all,
    mul,
    scale,
    scatter_rows,
    segment_softmax,
    segment_sum,
    sigmoid,
    softmax_col,
    square,
    sub,
    sum_all,
    sum_rows,
    sum_squares,
    take_rows,
    tanh,
)

__all__ = [
    "Adam",
    "GradReport",
    "Mlp",
    "ParameterSet",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "concat",
    "dense",
    "gradient_check",
    "init_dense",
    "kernels",
    "leaky_relu",
    "load_params_into",
    "matmul",
    "mean_all",
    "mlp_forward",
    "mul",
    "no_tape",
    "params_from_doc",
    "params_to_doc",
    "save_params",
    "scale",
    "scatter_rows",
    "segment_softmax",
    "segment_sum",
    "sigmoid",
    "soft_update",
    "softmax_col",
    "square",
    "sub",
    "sum_all",
    "sum_rows",
    "sum_squares",
    "take_rows",
    "tanh",
]
