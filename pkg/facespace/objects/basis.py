from __future__ import annotations

# Typing
from typing import Optional

# Internal
from facespace.autodiff import Tensor, gram_schmidt, rows
from facespace.constants import DEGENERACY_TOLERANCE
from facespace.errors import ContractError, DimensionError

# External
import numpy as np


class OrthonormalBasis:
    """
    The learnable basis matrix ``D``: ``p`` identity rows followed by ``q`` motion
    rows, each of ambient dimension ``N``. The raw parameter is free; the rows
    used by the model are re-orthonormalized on every forward pass, so the
    orthogonality constraint holds exactly while ``raw`` stays learnable.

    :ivar raw: The learnable ``(p+q)×N`` parameter.
    :vartype raw: Tensor

    :ivar p: Number of identity basis vectors.
    :vartype p: int

    :ivar q: Number of motion basis vectors.
    :vartype q: int

    :ivar n: Ambient dimension ``N``.
    :vartype n: int

    :ivar matrix: The orthonormalized rows of the current forward pass, or None
        before the first call to :meth:`orthonormalize`.
    :vartype matrix: Optional[Tensor]
    """

    raw: Tensor
    p: int
    q: int
    n: int
    matrix: Optional[Tensor]

    def __init__(self, raw: Tensor, p: int, q: int):
        """
        :param raw: The ``(p+q)×N`` parameter tensor.
        :type raw: Tensor
        :param p: Identity basis count.
        :type p: int
        :param q: Motion basis count.
        :type q: int
        """
        if p <= 0 or q <= 0:
            raise ContractError(f"basis counts must be positive, got p={p}, q={q}")
        if raw.ndim != 2 or raw.shape[0] != p + q:
            raise DimensionError("OrthonormalBasis", raw.shape, (p + q, -1))
        if p + q > raw.shape[1]:
            raise DimensionError("OrthonormalBasis", raw.shape)
        self.raw = raw
        self.p = p
        self.q = q
        self.n = raw.shape[1]
        self.matrix = None
        self._identity: Optional[Tensor] = None
        self._motion: Optional[Tensor] = None

    @classmethod
    def random(
        cls, p: int, q: int, n: int, rng: np.random.Generator
    ) -> OrthonormalBasis:
        """Draw ``raw`` entries from N(0, 1/√N)."""
        data = rng.normal(0.0, 1.0 / np.sqrt(n), size=(p + q, n))
        return cls(Tensor(data, requires_grad=True, name="basis.raw"), p, q)

    def orthonormalize(self, tol: float = DEGENERACY_TOLERANCE) -> Tensor:
        """Run Gram-Schmidt on ``raw`` for this forward pass and cache the result.
        ``raw`` itself is left untouched."""
        self.matrix = gram_schmidt(self.raw, tol)
        self._identity = rows(self.matrix, 0, self.p)
        self._motion = rows(self.matrix, self.p, self.p + self.q)
        return self.matrix

    def invalidate(self) -> None:
        """Forget the cached rows, e.g. after ``raw`` was updated."""
        self.matrix = None
        self._identity = None
        self._motion = None

    @property
    def identity_block(self) -> Tensor:
        """``X_id``: the first ``p`` orthonormal rows."""
        if self._identity is None:
            raise ContractError("basis not orthonormalized in this forward pass")
        return self._identity

    @property
    def motion_block(self) -> Tensor:
        """``Y_m``: the last ``q`` orthonormal rows."""
        if self._motion is None:
            raise ContractError("basis not orthonormalized in this forward pass")
        return self._motion
