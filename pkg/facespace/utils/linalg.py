from __future__ import annotations

# Typing
from typing import Tuple

# Internal
from facespace.constants import DEGENERACY_TOLERANCE
from facespace.errors import DegenerateBasisError

# External
import numpy as np


def modified_gram_schmidt(
    rows: np.ndarray, tol: float = DEGENERACY_TOLERANCE
) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormalize the rows of ``rows`` in order, projecting each against the
    rows already orthonormalized. Returns ``(q, r)`` with ``rows = (qᵀ r)ᵀ``, i.e.
    row ``i`` equals ``sum_j r[j, i] * q[j]`` and ``r`` is upper triangular with a
    positive diagonal.

    :raises DegenerateBasisError: if a residual norm drops below ``tol``.
    """
    count, width = rows.shape
    q = np.empty((count, width), dtype=np.float64)
    r = np.zeros((count, count), dtype=np.float64)
    for i in range(count):
        v = np.array(rows[i], dtype=np.float64)
        for j in range(i):
            r[j, i] = q[j] @ v
            v -= r[j, i] * q[j]
        norm = float(np.linalg.norm(v))
        if norm < tol:
            raise DegenerateBasisError(i, norm)
        r[i, i] = norm
        q[i] = v / norm
    return q, r


def column_residuals(matrix: np.ndarray) -> np.ndarray:
    """Gram-Schmidt residual norm of every column of ``matrix`` against the columns
    before it. A (near) zero entry means the matrix is column-rank deficient."""
    count = matrix.shape[1]
    basis = []
    residuals = np.empty(count)
    for i in range(count):
        v = np.array(matrix[:, i], dtype=np.float64)
        for b in basis:
            v -= (b @ v) * b
        norm = float(np.linalg.norm(v))
        residuals[i] = norm
        if norm > 0:
            basis.append(v / norm)
    return residuals


def orthonormality_residual(matrix: np.ndarray) -> float:
    """``max |D·Dᵀ − I|`` for a matrix whose rows should be orthonormal."""
    gram = matrix @ matrix.T
    return float(np.max(np.abs(gram - np.eye(matrix.shape[0]))))
