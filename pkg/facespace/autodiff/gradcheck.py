from __future__ import annotations

# Typing
from typing import Callable, Optional, Sequence

# Internal
from facespace.constants import FD_STEP
from facespace.errors import ContractError, NumericError
from .tensor import Tensor, backward

# External
import logging
import numpy as np

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = FD_STEP,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare reverse-mode gradients with central finite differences.

    ``f`` rebuilds the graph from ``params`` on every call and must be
    deterministic. Returns the largest
    ``|analytic − numeric| / max(1, |numeric|)`` over the checked entries.

    :param f: Graph builder returning a scalar tensor.
    :type f: Callable[[], Tensor]
    :param params: Leaves to differentiate; their ``requires_grad`` must be set.
    :type params: Sequence[Tensor]
    :param h: Finite-difference step.
    :type h: float
    :param max_entries: If given, check at most this many randomly chosen entries
        per parameter instead of all of them.
    :type max_entries: Optional[int]
    :param seed: Seed for the entry selection.
    :type seed: int
    :return: The maximum relative error.
    :rtype: float
    """
    if h <= 0:
        raise ContractError(f"grad_check: h must be positive, got {h}")

    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros(p.shape) for p in params
    ]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad_flat = grad.reshape(-1)
        for i in entries:
            original = flat[i]
            try:
                flat[i] = original + h
                plus = f().item()
                flat[i] = original - h
                minus = f().item()
            finally:
                flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            if not np.isfinite(numeric):
                raise NumericError(f"non-finite finite difference at entry {i}")
            error = abs(grad_flat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)

    for p in params:
        p.zero_grad()
    logger.debug("grad_check over %d parameters: max error %.3e", len(params), worst)
    return worst
