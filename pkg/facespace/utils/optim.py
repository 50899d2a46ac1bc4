from __future__ import annotations

# Typing
from typing import Dict, Mapping

# Internal
from facespace.autodiff import Tensor
from facespace.errors import CheckpointError, ConfigError

# External
from abc import ABCMeta, abstractmethod
import numpy as np

OPTIMIZERS = ("adam", "sgd")


class Optimizer(metaclass=ABCMeta):
    """
    Updates a fixed set of named leaf tensors in place from their ``grad``.
    Parameters without a gradient are left alone (and keep no state).
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float):
        if not lr >= 0:
            raise ConfigError(
                "train.lr", f"learning rate must be non-negative, got {lr}"
            )
        self.params: Dict[str, Tensor] = dict(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    @abstractmethod
    def step(self) -> None:
        raise NotImplementedError

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Internal state as named arrays, for checkpoints."""
        return {}

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        if arrays:
            raise CheckpointError(
                f"{type(self).__name__} keeps no state, got {', '.join(arrays)}"
            )


class Sgd(Optimizer):
    """Plain gradient descent: ``θ ← θ − lr·g``."""

    def step(self) -> None:
        for tensor in self.params.values():
            if tensor.grad is not None:
                tensor.data -= self.lr * tensor.grad


class Adam(Optimizer):
    """
    Adam with bias correction. Moments are created lazily per parameter on its
    first update, and each parameter counts its own updates.
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.exp_avg: Dict[str, np.ndarray] = {}
        self.exp_avg_sq: Dict[str, np.ndarray] = {}
        self.steps: Dict[str, int] = {}

    def step(self) -> None:
        b1, b2 = self.beta1, self.beta2
        for name, tensor in self.params.items():
            grad = tensor.grad
            if grad is None:
                continue
            if name not in self.steps:
                self.exp_avg[name] = np.zeros(tensor.shape)
                self.exp_avg_sq[name] = np.zeros(tensor.shape)
                self.steps[name] = 0
            self.steps[name] += 1
            t = self.steps[name]

            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad

            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays: Dict[str, np.ndarray] = {}
        for name in self.params:
            if name not in self.steps:
                continue
            arrays[f"{name}/m"] = self.exp_avg[name].copy()
            arrays[f"{name}/v"] = self.exp_avg_sq[name].copy()
            arrays[f"{name}/step"] = np.array(float(self.steps[name]))
        return arrays

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.exp_avg.clear()
        self.exp_avg_sq.clear()
        self.steps.clear()
        consumed = 0
        for name, tensor in self.params.items():
            keys = (f"{name}/m", f"{name}/v", f"{name}/step")
            present = [k in arrays for k in keys]
            if not any(present):
                continue
            if not all(present):
                raise CheckpointError(f"incomplete optimizer state for {name}")
            m, v, step = (np.asarray(arrays[k], dtype=np.float64) for k in keys)
            if m.shape != tensor.shape or v.shape != tensor.shape:
                raise CheckpointError(f"optimizer state shape mismatch for {name}")
            self.exp_avg[name] = m.copy()
            self.exp_avg_sq[name] = v.copy()
            self.steps[name] = int(step)
            consumed += 3
        if consumed != len(arrays):
            raise CheckpointError("optimizer state names unknown parameters")


def make_optimizer(kind: str, params: Mapping[str, Tensor], lr: float) -> Optimizer:
    """Build the optimizer named ``kind`` (``"adam"`` or ``"sgd"``)."""
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ConfigError("train.optimizer", f"expected one of {OPTIMIZERS}, got {kind!r}")
