# Export the engine's public surface
from .tensor import Tensor, Graph, backward, no_grad, is_grad_enabled
from .ops import (
    matmul,
    add,
    sub,
    mul,
    scale,
    tanh,
    relu,
    elementwise,
    sum_all,
    reshape,
    rows,
    row,
    stack,
    detach,
    cosine_sim,
    softmax_cross_entropy,
    l1_distance,
    gram_schmidt,
    ones_column,
)
from .gradcheck import grad_check
