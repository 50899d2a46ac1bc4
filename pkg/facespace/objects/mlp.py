from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

# Internal
from facespace.autodiff import Tensor, add, matmul, ones_column, relu, tanh
from facespace.errors import ContractError, DimensionError

# External
import numpy as np

ACTIVATIONS = {"tanh": tanh, "relu": relu}


@dataclass(frozen=True)
class MlpSpec:
    """
    Layer widths of a multilayer perceptron, input first. Hidden layers use
    ``activation``; the final layer is linear.

    Example:
    ```
    MlpSpec(widths=(64, 64, 64, 16), activation="relu")  # 3 linear layers
    ```
    """

    widths: Tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ContractError(f"an MLP needs at least 2 widths, got {self.widths}")
        if any(w <= 0 for w in self.widths):
            raise ContractError(f"MLP widths must be positive, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1


class Mlp:
    """
    A stack of linear layers over batches (one row per sample). Each layer is
    ``x·W + 1·b`` with ``W`` of shape ``in×out`` and ``b`` of shape ``1×out``.

    :ivar spec: The layer widths and activation.
    :vartype spec: MlpSpec

    :ivar weights: One ``in×out`` weight per layer.
    :vartype weights: List[Tensor]

    :ivar biases: One ``1×out`` bias per layer.
    :vartype biases: List[Tensor]
    """

    spec: MlpSpec
    weights: List[Tensor]
    biases: List[Tensor]

    def __init__(
        self, spec: MlpSpec, weights: Sequence[Tensor], biases: Sequence[Tensor]
    ):
        if len(weights) != spec.num_layers or len(biases) != spec.num_layers:
            raise ContractError("one weight and one bias per layer required")
        for i, (w, b) in enumerate(zip(weights, biases)):
            expected = (spec.widths[i], spec.widths[i + 1])
            if w.shape != expected:
                raise DimensionError(f"layer {i} weight", w.shape, expected)
            if b.shape != (1, expected[1]):
                raise DimensionError(f"layer {i} bias", b.shape, (1, expected[1]))
        self.spec = spec
        self.weights = list(weights)
        self.biases = list(biases)

    @classmethod
    def glorot(cls, spec: MlpSpec, rng: np.random.Generator, name: str = "mlp") -> Mlp:
        """Weights uniform in ±√(6/(fan_in+fan_out)), biases zero."""
        weights, biases = [], []
        for i in range(spec.num_layers):
            fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(
                Tensor(
                    rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                    requires_grad=True,
                    name=f"{name}.{i}.weight",
                )
            )
            biases.append(
                Tensor(
                    np.zeros((1, fan_out)), requires_grad=True, name=f"{name}.{i}.bias"
                )
            )
        return cls(spec, weights, biases)

    @property
    def in_width(self) -> int:
        return self.spec.widths[0]

    @property
    def out_width(self) -> int:
        return self.spec.widths[-1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError("mlp input", x.shape, (-1, self.in_width))
        activation = ACTIVATIONS[self.spec.activation]
        ones = ones_column(x.shape[0])
        h = x
        last = self.spec.num_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), matmul(ones, b))
            if i < last:
                h = activation(h)
        return h

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}.{i}.weight"] = w
            params[f"{prefix}.{i}.bias"] = b
        return params

    @classmethod
    def from_arrays(
        cls, arrays: Dict[str, np.ndarray], prefix: str, activation: str
    ) -> Mlp:
        """Rebuild an MLP from ``{prefix}.{i}.weight`` / ``.bias`` arrays."""
        weights, biases = [], []
        i = 0
        while f"{prefix}.{i}.weight" in arrays:
            weights.append(
                Tensor(
                    arrays[f"{prefix}.{i}.weight"], True, name=f"{prefix}.{i}.weight"
                )
            )
            biases.append(
                Tensor(arrays[f"{prefix}.{i}.bias"], True, name=f"{prefix}.{i}.bias")
            )
            i += 1
        if not weights:
            raise ContractError(f"no parameters found for {prefix!r}")
        widths = tuple([weights[0].shape[0]] + [w.shape[1] for w in weights])
        return cls(MlpSpec(widths, activation), weights, biases)

