"""
Training objectives of the disentangled face space.

Every loss is a pure function of its inputs returning a scalar tensor, so the
losses can be combined by :func:`total_generator_loss` and differentiated in one
backward pass.
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple, Union

# Internal
from facespace.autodiff import (
    Tensor,
    add,
    cosine_sim,
    l1_distance,
    mul,
    row,
    scale,
    softmax_cross_entropy,
    stack,
    sub,
    sum_all,
)
from facespace.constants import COSINE_EPS
from facespace.errors import ConfigError, ContractError, DimensionError

# External
import numpy as np

Labels = Union[int, Sequence[int], np.ndarray]
Pairs = Sequence[Tuple[int, int]]


@dataclass(frozen=True)
class LossWeights:
    """
    Weights of the total generator objective. ``d`` enters the generator
    objective with a negative sign and the discriminator objective with a
    positive one. The defaults are the face model's weights; the synthetic
    profile sets the image-only terms ``vgg`` and ``adv`` to zero.
    """

    recon: float = 1.0
    vgg: float = 1.0
    adv: float = 1.0
    s: float = 2.0
    d: float = 0.04
    r: float = 1.0
    id: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value >= 0:
                raise ConfigError(
                    f"weights.{f.name}", f"must be non-negative, got {value}"
                )

    @classmethod
    def synthetic(cls) -> LossWeights:
        return cls(vgg=0.0, adv=0.0)


@dataclass
class LossParts:
    """
    Scalar loss components of one generator step. Components that are not
    computed (image losses, or terms disabled by the ablation level) stay None
    and enter the total as explicit zeros.
    """

    recon: Optional[Tensor] = None
    vgg: Optional[Tensor] = None
    adv: Optional[Tensor] = None
    s: Optional[Tensor] = None
    d: Optional[Tensor] = None
    r: Optional[Tensor] = None
    id: Optional[Tensor] = None

    def value(self, name: str) -> float:
        part = getattr(self, name)
        return 0.0 if part is None else part.item()


def pair_indices(batch_size: int) -> List[Tuple[int, int]]:
    """The fixed pairing ``(t, T+t)`` of a batch of ``B = 2T`` samples."""
    if batch_size <= 0 or batch_size % 2:
        raise ContractError(f"batch size must be positive and even, got {batch_size}")
    half = batch_size // 2
    return [(t, half + t) for t in range(half)]


def _as_matrix(batch: Union[Tensor, Sequence[Tensor]]) -> Union[Tensor, List[Tensor]]:
    if isinstance(batch, Tensor):
        if batch.ndim != 2:
            raise DimensionError("similarity_loss", batch.shape)
        return batch
    return list(batch)


def _pick(batch: Union[Tensor, List[Tensor]], index: int) -> Tensor:
    if isinstance(batch, Tensor):
        return row(batch, index)
    return batch[index]


def _batch_len(batch: Union[Tensor, List[Tensor]]) -> int:
    return batch.shape[0] if isinstance(batch, Tensor) else len(batch)


def similarity_loss(
    batch_w_id: Union[Tensor, Sequence[Tensor]],
    batch_f_id: Union[Tensor, Sequence[Tensor]],
    pairs: Optional[Pairs] = None,
    eps: float = COSINE_EPS,
) -> Tensor:
    """
    Identity similarity distillation: the negative cosine between the vector of
    pairwise similarities of identity descriptors and the vector of pairwise
    similarities of reference identity features.

    :param batch_w_id: ``B`` identity descriptors (a ``B×N`` matrix or a list).
    :param batch_f_id: ``B`` reference identity features (``B×K`` or a list).
    :param pairs: Index pairs; defaults to ``(t, T+t)``.
    :param eps: Clamp of every cosine denominator.
    :return: A scalar in ``[-1, 1]``.
    """
    w = _as_matrix(batch_w_id)
    f = _as_matrix(batch_f_id)
    size = _batch_len(w)
    if size != _batch_len(f):
        raise ContractError(
            f"similarity_loss: {size} descriptors but {_batch_len(f)} features"
        )
    if size % 2:
        raise ContractError(f"similarity_loss needs an even batch, got {size}")
    if pairs is None:
        pairs = pair_indices(size)
    for i, j in pairs:
        if not (0 <= i < size and 0 <= j < size):
            raise ContractError(f"pair ({i}, {j}) out of range for batch of {size}")

    s_w = stack([cosine_sim(_pick(w, i), _pick(w, j), eps) for i, j in pairs])
    s_id = stack([cosine_sim(_pick(f, i), _pick(f, j), eps) for i, j in pairs])
    return scale(cosine_sim(s_id, s_w, eps), -1.0)


def domain_loss(logits: Tensor, label: Labels) -> Tensor:
    """Cross-entropy of the discriminator's identity logits against the driving
    identity (mean over rows for a batch)."""
    return softmax_cross_entropy(logits, label)


def identity_loss(logits: Tensor, label: Labels) -> Tensor:
    """Softmax cross-entropy of the identity classifier against the source
    identity (mean over rows for a batch)."""
    return softmax_cross_entropy(logits, label)


def latent_regression_loss(
    hat_w_id: Tensor, w_id_s: Tensor, hat_w_m: Tensor, w_m_d: Tensor
) -> Tensor:
    """``‖ŵ_id − w_id^s‖₁ + ‖ŵ_m − w_m^d‖₁`` where the hatted descriptors come
    from re-encoding the generated output with the same encoders and basis."""
    return add(l1_distance(hat_w_id, w_id_s), l1_distance(hat_w_m, w_m_d))


def reconstruction_loss(
    generated: Tensor, target: Union[Tensor, np.ndarray]
) -> Tensor:
    """Mean squared error over all observation entries."""
    goal = target if isinstance(target, Tensor) else Tensor(target)
    if generated.shape != goal.shape:
        raise DimensionError("reconstruction_loss", generated.shape, goal.shape)
    diff = sub(generated, goal)
    return scale(sum_all(mul(diff, diff)), 1.0 / generated.size)


def total_generator_loss(parts: LossParts, w: LossWeights) -> Tensor:
    """
    ``λ_recon·L_recon + λ_vgg·L_vgg + λ_adv·L_adv + λ_s·L_s − λ_d·L_d + λ_r·L_r
    + λ_id·L_id``. Missing parts contribute explicit zeros.
    """
    signs = {"d": -1.0}
    total: Tensor = Tensor(0.0, op="zero")
    for f in fields(parts):
        part = getattr(parts, f.name)
        if part is None:
            part = Tensor(0.0, op="zero")
        if part.ndim != 0:
            raise DimensionError(f"loss part {f.name}", part.shape, ())
        weight = signs.get(f.name, 1.0) * getattr(w, f.name)
        total = add(total, scale(part, weight))
    return total
