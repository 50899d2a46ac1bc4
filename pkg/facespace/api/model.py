from __future__ import annotations

# Typing
from typing import Union

# Internal
from facespace.autodiff import Tensor, add, no_grad, reshape
from facespace.errors import ContractError, DimensionError
from facespace.objects import ModelState, SubspaceDescriptors
from .subspace import compose

# External
import numpy as np

Observation = Union[Tensor, np.ndarray]


def _as_vectors(d: SubspaceDescriptors) -> SubspaceDescriptors:
    return SubspaceDescriptors(
        *(reshape(t, (t.shape[-1],)) for t in (d.a_id, d.b_m, d.w_id, d.w_m, d.F))
    )


def _observations(state: ModelState, x: Observation, what: str) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim == 1:
        t = reshape(t, (1, t.shape[0]))
    if t.ndim != 2 or t.shape[1] != state.m:
        raise DimensionError(what, t.shape, (-1, state.m))
    return t


def encode(
    state: ModelState, source: Observation, driving: Observation
) -> SubspaceDescriptors:
    """Extract identity coefficients from ``source`` and motion coefficients from
    ``driving`` and compose them through the basis.

    Args:
        `state` (ModelState): A model whose basis was orthonormalized this pass.
        `source` (Tensor | numpy.ndarray): ``M`` or ``B×M`` source observations.
        `driving` (Tensor | numpy.ndarray): Driving observations, same shape.

    Returns:
        SubspaceDescriptors: One row per sample, or vectors when both inputs
        are vectors.
    """
    single = all(
        np.ndim(x.data if isinstance(x, Tensor) else x) == 1 for x in (source, driving)
    )
    src = _observations(state, source, "encode source")
    drv = _observations(state, driving, "encode driving")
    if src.shape != drv.shape:
        raise DimensionError("encode", src.shape, drv.shape)

    a_id = state.enc_id(src)
    b_m = state.enc_m(drv)
    if state.basis is None:
        # Subspaces bypassed: the encoders emit the descriptors directly.
        d = SubspaceDescriptors(a_id, b_m, a_id, b_m, add(a_id, b_m))
    elif state.basis.matrix is None:
        raise ContractError("basis not orthonormalized; call state.begin_pass()")
    else:
        d = compose(state.basis, a_id, b_m)
    return _as_vectors(d) if single else d


def generate(state: ModelState, d: SubspaceDescriptors) -> Tensor:
    """Decode the face representation into an observation.

    Args:
        `state` (ModelState): The model.
        `d` (SubspaceDescriptors): Descriptors whose ``F`` is decoded.

    Returns:
        Tensor: ``B×M`` generated observations (``M`` for vector input).
    """
    face = d.F
    if face.ndim == 1:
        return reshape(state.decoder(reshape(face, (1, face.shape[0]))), (state.m,))
    return state.decoder(face)


def discriminate(state: ModelState, w_m: Tensor) -> Tensor:
    """Identity-domain logits predicted from motion descriptors.

    Args:
        `state` (ModelState): The model.
        `w_m` (Tensor): ``N`` or ``B×N`` motion descriptors.

    Returns:
        Tensor: Raw logits over the ``C`` training identities.
    """
    return _logits(state.disc, w_m)


def classify_identity(state: ModelState, w_id: Tensor) -> Tensor:
    """Identity logits predicted from identity descriptors.

    Args:
        `state` (ModelState): The model.
        `w_id` (Tensor): ``N`` or ``B×N`` identity descriptors.

    Returns:
        Tensor: Raw logits over the ``C`` training identities.
    """
    return _logits(state.classifier, w_id)


def _logits(net, x: Tensor) -> Tensor:
    if x.ndim == 1:
        return reshape(net(reshape(x, (1, x.shape[0]))), (net.out_width,))
    return net(x)


def cross_reenact(
    state: ModelState, source: Observation, driving: Observation
) -> Tensor:
    """Generate with the source's identity and the driving's motion.

    Args:
        `state` (ModelState): The model.
        `source` (Tensor | numpy.ndarray): Observations providing identity.
        `driving` (Tensor | numpy.ndarray): Observations providing motion.

    Returns:
        Tensor: ``B×M`` generated observations (``M`` for vector inputs).
    """
    state.begin_pass()
    return generate(state, encode(state, source, driving))


def orthonormal_basis(state: ModelState) -> np.ndarray:
    """The ``(p+q)×N`` orthonormal basis rows of the current parameters."""
    if state.basis is None:
        raise ContractError("model has no basis (subspaces are bypassed)")
    with no_grad():
        state.begin_pass()
        return state.basis.matrix.data.copy()
