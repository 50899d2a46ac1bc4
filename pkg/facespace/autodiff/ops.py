"""
Differentiable operations on :class:`~facespace.autodiff.tensor.Tensor`.

There is no broadcasting: binary operations require identical shapes and raise
:class:`~facespace.errors.DimensionError` otherwise. Batches are expressed as
stacked matrices (one row per sample).
"""

from __future__ import annotations

# Typing
from typing import Optional, Sequence, Tuple, Union

# Internal
from facespace.constants import DEGENERACY_TOLERANCE
from facespace.errors import ContractError, DimensionError, TargetIndexError
from facespace.utils.linalg import modified_gram_schmidt
from .tensor import Tensor, make_result

# External
from scipy.linalg import solve_triangular
import numpy as np

ELEMENTWISE_OPS = ("add", "sub", "mul", "scale", "tanh", "relu")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(op, a.shape, b.shape)


def _rank(op: str, a: Tensor, rank: int) -> None:
    if a.ndim != rank:
        raise DimensionError(op, a.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a`` (m×k) and ``b`` (k×n)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    a_data, b_data = a.data, b.data

    def backward(grad: np.ndarray):
        return grad @ b_data.T, a_data.T @ grad

    return make_result(a_data @ b_data, "matmul", (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return make_result(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return make_result(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return make_result(
        a_data * b_data, "mul", (a, b), lambda g: (g * b_data, g * a_data)
    )


def scale(a: Tensor, constant: float) -> Tensor:
    """Multiply every entry by a Python constant."""
    c = float(constant)
    return make_result(a.data * c, "scale", (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0.0).astype(np.float64)
    out = np.where(a.data > 0.0, a.data, 0.0)
    return make_result(out, "relu", (a,), lambda g: (g * mask,))


def elementwise(
    op: str,
    a: Tensor,
    b: Optional[Tensor] = None,
    constant: Optional[float] = None,
) -> Tensor:
    """
    Dispatch one of the elementwise operations by name.

    :param op: One of ``add``, ``sub``, ``mul``, ``scale``, ``tanh``, ``relu``.
    :type op: str
    :param b: Second operand for the binary operations.
    :type b: Optional[Tensor]
    :param constant: Factor for ``scale``.
    :type constant: Optional[float]
    """
    if op in ("add", "sub", "mul"):
        if b is None:
            raise ContractError(f"elementwise {op} needs a second operand")
        return {"add": add, "sub": sub, "mul": mul}[op](a, b)
    if op == "scale":
        if constant is None:
            raise ContractError("elementwise scale needs a constant")
        return scale(a, constant)
    if op == "tanh":
        return tanh(a)
    if op == "relu":
        return relu(a)
    raise ContractError(
        f"unknown elementwise op {op!r}, expected one of {ELEMENTWISE_OPS}"
    )


def sum_all(a: Tensor) -> Tensor:
    """Sum every entry into a scalar."""
    shape = a.shape
    return make_result(
        np.asarray(a.data.sum()), "sum", (a,), lambda g: (np.full(shape, float(g)),)
    )


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    if int(np.prod(shape)) != a.size:
        raise DimensionError("reshape", original, tuple(shape))
    return make_result(
        a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(original),)
    )


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start..stop-1`` of a matrix, as a matrix."""
    _rank("rows", a, 2)
    if not 0 <= start < stop <= a.shape[0]:
        raise ContractError(f"rows: slice {start}:{stop} out of range for {a.shape}")
    shape = a.shape

    def backward(grad: np.ndarray):
        full = np.zeros(shape)
        full[start:stop] = grad
        return (full,)

    return make_result(a.data[start:stop], "rows", (a,), backward)


def row(a: Tensor, index: int) -> Tensor:
    """Row ``index`` of a matrix, as a vector."""
    _rank("row", a, 2)
    if not 0 <= index < a.shape[0]:
        raise ContractError(f"row: index {index} out of range for {a.shape}")
    shape = a.shape

    def backward(grad: np.ndarray):
        full = np.zeros(shape)
        full[index] = grad
        return (full,)

    return make_result(a.data[index], "row", (a,), backward)


def stack(scalars: Sequence[Tensor]) -> Tensor:
    """Stack rank-0 tensors into a vector."""
    if not scalars:
        raise ContractError("stack needs at least one scalar")
    for s in scalars:
        if s.ndim != 0:
            raise DimensionError("stack", s.shape, ())
    values = np.array([s.data for s in scalars], dtype=np.float64)
    return make_result(
        values, "stack", tuple(scalars), lambda g: tuple(np.asarray(x) for x in g)
    )


def detach(a: Tensor) -> Tensor:
    """A constant copy of ``a``; gradients stop here."""
    return Tensor(a.data, op="detach")


def cosine_sim(u: Tensor, v: Tensor, eps: float) -> Tensor:
    """
    ``u·v / max(‖u‖·‖v‖, eps)`` for two vectors. The clamp keeps the result
    differentiable when either vector is zero.
    """
    _rank("cosine_sim", u, 1)
    _same_shape("cosine_sim", u, v)
    if eps <= 0:
        raise ContractError(f"cosine_sim: eps must be positive, got {eps}")
    u_data, v_data = u.data, v.data
    dot = float(u_data @ v_data)
    nu = float(np.linalg.norm(u_data))
    nv = float(np.linalg.norm(v_data))
    denom = nu * nv
    clamped = denom <= eps
    value = dot / (eps if clamped else denom)

    def backward(grad: np.ndarray):
        g = float(grad)
        if clamped:
            return g * v_data / eps, g * u_data / eps
        du = v_data / denom - value * u_data / (nu * nu)
        dv = u_data / denom - value * v_data / (nv * nv)
        return g * du, g * dv

    return make_result(np.asarray(value), "cosine_sim", (u, v), backward)


def softmax_cross_entropy(
    logits: Tensor, target: Union[int, Sequence[int], np.ndarray]
) -> Tensor:
    """
    ``-log softmax(logits)[target]`` using the max-subtraction log-sum-exp form.

    A vector of ``C`` logits takes one class index. A ``B×C`` matrix takes ``B``
    indices and returns the mean over rows.
    """
    if logits.ndim == 1:
        matrix = logits.data.reshape(1, -1)
        targets = np.asarray([target], dtype=np.int64).reshape(-1)
    elif logits.ndim == 2:
        matrix = logits.data
        targets = np.asarray(target, dtype=np.int64).reshape(-1)
    else:
        raise DimensionError("softmax_cross_entropy", logits.shape)
    batch, classes = matrix.shape
    if targets.shape[0] != batch:
        raise DimensionError("softmax_cross_entropy", logits.shape, targets.shape)
    bad = (targets < 0) | (targets >= classes)
    if np.any(bad):
        raise TargetIndexError(
            f"class index {int(targets[bad][0])} out of range for {classes} classes"
        )

    shifted = matrix - matrix.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = np.arange(batch)
    value = float(np.mean(log_norm - shifted[picked, targets]))

    shape = logits.shape

    def backward(grad: np.ndarray):
        probs = np.exp(shifted - log_norm[:, None])
        probs[picked, targets] -= 1.0
        return ((float(grad) / batch) * probs.reshape(shape),)

    return make_result(np.asarray(value), "softmax_cross_entropy", (logits,), backward)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Sum of absolute differences. The subgradient at exact ties is 0."""
    _same_shape("l1_distance", a, b)
    diff = a.data - b.data
    sign = np.sign(diff)
    return make_result(
        np.asarray(np.abs(diff).sum()),
        "l1_distance",
        (a, b),
        lambda g: (float(g) * sign, -float(g) * sign),
    )


def gram_schmidt(raw: Tensor, tol: float = DEGENERACY_TOLERANCE) -> Tensor:
    """
    Orthonormalize the rows of ``raw`` with modified Gram-Schmidt, in row order.

    The adjoint is the thin-QR adjoint of ``rawᵀ = Q·R`` (R with positive
    diagonal), which is exactly what modified Gram-Schmidt computes.

    :raises DegenerateBasisError: when a residual norm falls below ``tol``.
    """
    _rank("gram_schmidt", raw, 2)
    count, width = raw.shape
    if count > width:
        raise DimensionError("gram_schmidt", raw.shape)
    q, r = modified_gram_schmidt(raw.data, tol)

    def backward(grad: np.ndarray):
        # Column convention: A = rawᵀ (N×k), Qc = qᵀ, dQ = gradᵀ.
        qc = q.T
        dq = grad.T
        qdq = qc.T @ dq
        skew = np.tril(qdq - qdq.T)
        middle = dq - qc @ qdq + qc @ skew
        # d raw = (middle · R⁻ᵀ)ᵀ = R⁻¹ · middleᵀ
        return (solve_triangular(r, middle.T, lower=False),)

    return make_result(q, "gram_schmidt", (raw,), backward)


def ones_column(batch: int) -> Tensor:
    """A constant ``batch×1`` column of ones, used to add a bias row to a batch."""
    return Tensor(np.ones((batch, 1)), op="ones")
