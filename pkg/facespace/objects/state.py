from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import Dict, List, Optional

# Internal
from facespace.autodiff import Tensor
from facespace.constants import HIDDEN_WIDTH
from facespace.errors import CheckpointError, ContractError
from .basis import OrthonormalBasis
from .mlp import Mlp, MlpSpec

# External
import numpy as np


@dataclass(frozen=True)
class ModelDims:
    """
    Sizes of every network in a :class:`ModelState`.

    :ivar p: Identity basis count.
    :ivar q: Motion basis count.
    :ivar n: Width ``N`` of descriptors and of the decoder input.
    :ivar m: Observation width ``M``.
    :ivar num_identities: Number of training identities ``C``.
    :ivar hidden: Hidden width of every MLP.
    """

    p: int
    q: int
    n: int
    m: int
    num_identities: int
    hidden: int = HIDDEN_WIDTH

    def __post_init__(self):
        if min(self.p, self.q, self.n, self.m, self.hidden) <= 0:
            raise ContractError(f"model dimensions must be positive: {self}")
        if self.num_identities < 2:
            raise ContractError("at least 2 identities are required")
        if self.p + self.q > self.n:
            raise ContractError(f"p + q = {self.p + self.q} exceeds N = {self.n}")


class ModelState:
    """
    Every trainable network of the model, plus the learnable basis.

    When ``basis`` is None the subspaces are bypassed: both encoders emit
    ``N``-wide descriptors that feed the decoder directly.

    :ivar basis: The learnable orthonormal basis, or None for the bypass model.
    :vartype basis: Optional[OrthonormalBasis]

    :ivar enc_id: Observation ``M`` → identity coefficients ``p`` (tanh).
    :vartype enc_id: Mlp

    :ivar enc_m: Observation ``M`` → motion coefficients ``q`` (tanh).
    :vartype enc_m: Mlp

    :ivar decoder: Face representation ``N`` → observation ``M`` (tanh).
    :vartype decoder: Mlp

    :ivar disc: Identity eraser, ``w_m`` → ``C`` logits; exactly 3 linear layers.
    :vartype disc: Mlp

    :ivar classifier: Identity classifier, ``w_id`` → ``C`` logits.
    :vartype classifier: Mlp
    """

    basis: Optional[OrthonormalBasis]
    enc_id: Mlp
    enc_m: Mlp
    decoder: Mlp
    disc: Mlp
    classifier: Mlp

    def __init__(
        self,
        basis: Optional[OrthonormalBasis],
        enc_id: Mlp,
        enc_m: Mlp,
        decoder: Mlp,
        disc: Mlp,
        classifier: Mlp,
    ):
        if disc.spec.num_layers != 3:
            raise ContractError(
                "the domain discriminator has 3 linear layers, "
                f"got {disc.spec.num_layers}"
            )
        self.basis = basis
        self.enc_id = enc_id
        self.enc_m = enc_m
        self.decoder = decoder
        self.disc = disc
        self.classifier = classifier

    @classmethod
    def create(
        cls, dims: ModelDims, rng: np.random.Generator, use_basis: bool = True
    ) -> ModelState:
        """Initialize a fresh model. Draws happen in a fixed order so a seed fully
        determines the parameters."""
        h = dims.hidden
        id_out = dims.p if use_basis else dims.n
        m_out = dims.q if use_basis else dims.n
        basis = None
        if use_basis:
            basis = OrthonormalBasis.random(dims.p, dims.q, dims.n, rng)
        enc_id = Mlp.glorot(MlpSpec((dims.m, h, h, id_out), "tanh"), rng, "enc_id")
        enc_m = Mlp.glorot(MlpSpec((dims.m, h, h, m_out), "tanh"), rng, "enc_m")
        decoder = Mlp.glorot(MlpSpec((dims.n, h, h, dims.m), "tanh"), rng, "decoder")
        c = dims.num_identities
        disc = Mlp.glorot(MlpSpec((dims.n, h, h, c), "relu"), rng, "disc")
        classifier = Mlp.glorot(MlpSpec((dims.n, h, h, c), "relu"), rng, "classifier")
        return cls(basis, enc_id, enc_m, decoder, disc, classifier)

    @property
    def uses_basis(self) -> bool:
        return self.basis is not None

    @property
    def n(self) -> int:
        return self.decoder.in_width

    @property
    def m(self) -> int:
        return self.decoder.out_width

    @property
    def num_identities(self) -> int:
        return self.disc.out_width

    def begin_pass(self) -> None:
        """Orthonormalize the basis for a new forward pass."""
        if self.basis is not None:
            self.basis.orthonormalize()

    def named_parameters(self) -> Dict[str, Tensor]:
        """All parameters in storage order (basis first, discriminator last)."""
        params: Dict[str, Tensor] = {}
        if self.basis is not None:
            params["basis.raw"] = self.basis.raw
        params.update(self.enc_id.named_parameters("enc_id"))
        params.update(self.enc_m.named_parameters("enc_m"))
        params.update(self.decoder.named_parameters("decoder"))
        params.update(self.classifier.named_parameters("classifier"))
        params.update(self.disc.named_parameters("disc"))
        return params

    def generator_parameters(self) -> Dict[str, Tensor]:
        """Everything updated by the generator-side objective (all but ``disc``)."""
        return {
            key: tensor
            for key, tensor in self.named_parameters().items()
            if not key.startswith("disc.")
        }

    def discriminator_parameters(self) -> Dict[str, Tensor]:
        return self.disc.named_parameters("disc")

    def zero_grad(self) -> None:
        for tensor in self.named_parameters().values():
            tensor.zero_grad()

    def parameter_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.numpy() for k, v in self.named_parameters().items()}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> ModelState:
        """Rebuild a model from named arrays; dimensions are read off the shapes."""
        try:
            enc_id = Mlp.from_arrays(arrays, "enc_id", "tanh")
            enc_m = Mlp.from_arrays(arrays, "enc_m", "tanh")
            decoder = Mlp.from_arrays(arrays, "decoder", "tanh")
            disc = Mlp.from_arrays(arrays, "disc", "relu")
            classifier = Mlp.from_arrays(arrays, "classifier", "relu")
        except ContractError as e:
            raise CheckpointError(f"incomplete model parameters: {e}") from e
        basis = None
        if "basis.raw" in arrays:
            raw = Tensor(arrays["basis.raw"], requires_grad=True, name="basis.raw")
            basis = OrthonormalBasis(raw, enc_id.out_width, enc_m.out_width)
        return cls(basis, enc_id, enc_m, decoder, disc, classifier)

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place (shapes must match)."""
        params = self.named_parameters()
        missing: List[str] = [k for k in params if k not in arrays]
        if missing:
            raise CheckpointError(f"missing parameters: {', '.join(missing)}")
        for key, tensor in params.items():
            value = arrays[key]
            if value.shape != tensor.shape:
                raise CheckpointError(
                    f"{key}: stored shape {value.shape} != model shape {tensor.shape}"
                )
            tensor.data[...] = value
        if self.basis is not None:
            self.basis.invalidate()
