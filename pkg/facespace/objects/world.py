from __future__ import annotations

# Typing
from dataclasses import dataclass

# Internal
from facespace.errors import ConfigError

# External
import numpy as np

MIXINGS = ("linear", "mlp-nonlinear")


@dataclass(frozen=True)
class WorldSpec:
    """
    Parameters of a synthetic benchmark: ``num_identities`` people, each filmed
    for ``frames_per_identity`` frames. Every frame mixes a per-identity code
    ``z_id`` with a per-frame code ``z_m`` into an ``m``-wide observation.

    Example:
    ```
    WorldSpec(num_identities=16, frames_per_identity=64, dim_zid=8, dim_zm=8,
              m=32, mixing="linear", noise_sigma=0.01, seed=0)
    ```
    """

    num_identities: int = 16
    frames_per_identity: int = 64
    dim_zid: int = 8
    dim_zm: int = 8
    m: int = 32
    mixing: str = "linear"
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 2:
            raise ConfigError("world.num_identities", "at least 2 identities required")
        if self.frames_per_identity < 1:
            raise ConfigError("world.frames_per_identity", "must be positive")
        if self.dim_zid < 1 or self.dim_zm < 1:
            raise ConfigError("world.dim_zid", "factor dimensions must be positive")
        if self.m < self.dim_zid + self.dim_zm:
            raise ConfigError("world.m", "must be at least dim_zid + dim_zm")
        if self.mixing not in MIXINGS:
            raise ConfigError("world.mixing", f"expected one of {MIXINGS}")
        if not self.noise_sigma >= 0:
            raise ConfigError("world.noise_sigma", "must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("world.seed", "must fit in 64 unsigned bits")

    @property
    def size(self) -> int:
        return self.num_identities * self.frames_per_identity


@dataclass(frozen=True)
class SyntheticSample:
    """
    One frame of the benchmark with its hidden ground truth.

    :ivar observation: The ``m``-wide observed vector.
    :vartype observation: numpy.ndarray

    :ivar identity_label: Identity index in ``0..C-1``.
    :vartype identity_label: int

    :ivar z_id: Identity code, shared bitwise by all frames of one identity.
    :vartype z_id: numpy.ndarray

    :ivar z_m: Motion code of this frame.
    :vartype z_m: numpy.ndarray
    """

    observation: np.ndarray
    identity_label: int
    z_id: np.ndarray
    z_m: np.ndarray
