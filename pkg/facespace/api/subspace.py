from __future__ import annotations

# Typing
from typing import Literal, Tuple

# Internal
from facespace.autodiff import Tensor, add, matmul, reshape, scale
from facespace.errors import DimensionError, RangeError
from facespace.objects import OrthonormalBasis, SubspaceDescriptors
from facespace.utils.linalg import orthonormality_residual as _residual

# External
import numpy as np


def orthonormalize(basis: OrthonormalBasis) -> Tensor:
    """Orthonormalize ``basis`` for the current forward pass.

    Args:
        `basis` (OrthonormalBasis): The basis whose ``raw`` rows are processed in
            row order with modified Gram-Schmidt.

    Returns:
        Tensor: The ``(p+q)×N`` orthonormal matrix, differentiable w.r.t. ``raw``.
    """
    return basis.orthonormalize()


def orthonormality_residual(basis: OrthonormalBasis) -> float:
    """``max |D·Dᵀ − I|`` of the current orthonormalized matrix."""
    return _residual(_matrix(basis).data)


def _matrix(basis: OrthonormalBasis) -> Tensor:
    if basis.matrix is None:
        basis.orthonormalize()
    assert basis.matrix is not None
    return basis.matrix


def _as_rows(t: Tensor, width: int, what: str) -> Tuple[Tensor, bool]:
    if t.ndim == 1:
        if t.shape[0] != width:
            raise DimensionError(what, t.shape, (width,))
        return reshape(t, (1, width)), True
    if t.ndim != 2 or t.shape[1] != width:
        raise DimensionError(what, t.shape, (-1, width))
    return t, False


def compose(
    basis: OrthonormalBasis, a_id: Tensor, b_m: Tensor
) -> SubspaceDescriptors:
    """Compose descriptors and the face representation from coefficients:
    ``w_id = a_id·X_id``, ``w_m = b_m·Y_m``, ``F = w_id + w_m``.

    Args:
        `basis` (OrthonormalBasis): A basis orthonormalized in this forward pass.
        `a_id` (Tensor): Identity coefficients, ``p`` or ``B×p``.
        `b_m` (Tensor): Motion coefficients, ``q`` or ``B×q``.

    Returns:
        SubspaceDescriptors: Vectors for vector input, matrices for batch input.
    """
    a_rows, single_a = _as_rows(a_id, basis.p, "compose a_id")
    b_rows, single_b = _as_rows(b_m, basis.q, "compose b_m")
    if single_a != single_b or a_rows.shape[0] != b_rows.shape[0]:
        raise DimensionError("compose", a_id.shape, b_m.shape)

    w_id = matmul(a_rows, basis.identity_block)
    w_m = matmul(b_rows, basis.motion_block)
    face = add(w_id, w_m)
    if single_a:
        n = basis.n
        return SubspaceDescriptors(
            a_id, b_m, reshape(w_id, (n,)), reshape(w_m, (n,)), reshape(face, (n,))
        )
    return SubspaceDescriptors(a_id, b_m, w_id, w_m, face)


def project(basis: OrthonormalBasis, face: Tensor) -> Tuple[np.ndarray, np.ndarray]:
    """Recover ``(a_id, b_m)`` from a face representation by projecting it onto the
    orthonormal identity and motion rows.

    Args:
        `basis` (OrthonormalBasis): A basis orthonormalized in this forward pass.
        `face` (Tensor): ``F`` as a vector or a ``B×N`` matrix.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: The identity and motion coefficients.
    """
    if face.shape[-1] != basis.n:
        raise DimensionError("project", face.shape, (basis.n,))
    values = face.data
    return values @ basis.identity_block.data.T, values @ basis.motion_block.data.T


def interpolate_motion(w_m_a: Tensor, w_m_b: Tensor, t: float) -> Tensor:
    """Linear interpolation ``(1−t)·w_m_a + t·w_m_b`` between two motion
    descriptors. The endpoints return the inputs themselves.

    Args:
        `w_m_a` (Tensor): Motion descriptor at ``t = 0``.
        `w_m_b` (Tensor): Motion descriptor at ``t = 1``.
        `t` (float): Position in ``[0, 1]``.

    Returns:
        Tensor: The interpolated descriptor.
    """
    if not 0.0 <= t <= 1.0:
        raise RangeError(f"interpolation position must lie in [0, 1], got {t}")
    if w_m_a.shape != w_m_b.shape:
        raise DimensionError("interpolate_motion", w_m_a.shape, w_m_b.shape)
    if t == 0.0:
        return w_m_a
    if t == 1.0:
        return w_m_b
    return add(scale(w_m_a, 1.0 - t), scale(w_m_b, t))


def zero_descriptor(
    d: SubspaceDescriptors, which: Literal["identity", "motion"]
) -> SubspaceDescriptors:
    """Replace one subspace's coefficients and descriptor with zeros and
    recompose ``F`` from what is left.

    Args:
        `d` (SubspaceDescriptors): The descriptors to edit.
        `which` (str): ``"identity"`` or ``"motion"``.

    Returns:
        SubspaceDescriptors: New descriptors; ``d`` is not modified.
    """
    if which == "motion":
        b_m = Tensor(np.zeros(d.b_m.shape), op="zeros")
        w_m = Tensor(np.zeros(d.w_m.shape), op="zeros")
        # F = w_id + 0 is w_id itself
        return SubspaceDescriptors(d.a_id, b_m, d.w_id, w_m, d.w_id)
    if which == "identity":
        a_id = Tensor(np.zeros(d.a_id.shape), op="zeros")
        w_id = Tensor(np.zeros(d.w_id.shape), op="zeros")
        return SubspaceDescriptors(a_id, d.b_m, w_id, d.w_m, d.w_m)
    raise RangeError(f"which must be 'identity' or 'motion', got {which!r}")
