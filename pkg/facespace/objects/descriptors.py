from __future__ import annotations

# Typing
from dataclasses import dataclass

# Internal
from facespace.autodiff import Tensor


@dataclass(frozen=True)
class SubspaceDescriptors:
    """
    Coefficients, subspace descriptors and the composed face representation.

    All fields are either vectors (one sample) or matrices with one row per
    sample. By construction ``w_id = a_id · X_id``, ``w_m = b_m · Y_m`` and
    ``F = w_id + w_m``.

    :ivar a_id: Identity coefficients, width ``p``.
    :vartype a_id: Tensor

    :ivar b_m: Motion coefficients, width ``q``.
    :vartype b_m: Tensor

    :ivar w_id: Identity subspace descriptor, width ``N``.
    :vartype w_id: Tensor

    :ivar w_m: Motion subspace descriptor, width ``N``.
    :vartype w_m: Tensor

    :ivar F: Face representation fed to the decoder, width ``N``.
    :vartype F: Tensor
    """

    a_id: Tensor
    b_m: Tensor
    w_id: Tensor
    w_m: Tensor
    F: Tensor

    @property
    def batched(self) -> bool:
        return self.F.ndim == 2

    def __len__(self) -> int:
        return self.F.shape[0] if self.batched else 1
