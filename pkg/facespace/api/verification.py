"""
The gradient-check suite run by ``facespace gradcheck``: every primitive op on
random inputs in ``[-1, 1]``, the orthonormalization composed with a loss, and
the full generator objective (encode, generate, re-encode, weighted total).
"""

from __future__ import annotations

# Typing
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

# Internal
from facespace.autodiff import (
    Tensor,
    add,
    cosine_sim,
    gram_schmidt,
    grad_check,
    l1_distance,
    matmul,
    mul,
    relu,
    scale,
    softmax_cross_entropy,
    sub,
    sum_all,
    tanh,
)
from facespace.constants import COSINE_EPS
from facespace.objects import ModelDims, ModelState, OrthonormalBasis, WorldSpec
from .losses import LossWeights, reconstruction_loss
from .subspace import compose
from .synthdata import BatchStream, generate_world
from .training import SEMANTICS, generator_objective

# External
import logging
import numpy as np

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4
# The composite objective has relu and L1 kinks; a smaller step keeps the
# central differences from straddling one.
COMPOSITE_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _leaf(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def primitive_checks(seed: int = 0) -> List[Tuple[str, Callable[[], float]]]:
    """Named checks of every registered op, each returning its max error."""
    rng = np.random.default_rng(seed)
    a, b = _leaf(rng, 4, 3), _leaf(rng, 3, 5)
    x, y = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    # Keep relu inputs away from the kink at 0.
    signs = rng.choice([-1.0, 1.0], size=(3, 4))
    r = Tensor(rng.uniform(0.1, 1.0, size=(3, 4)) * signs, requires_grad=True)
    u, v = _leaf(rng, 6), _leaf(rng, 6)
    logits = _leaf(rng, 5)
    batch_logits = _leaf(rng, 3, 5)
    # L1 inputs differ by at least 0.1 in every entry.
    p = _leaf(rng, 7)
    gap = rng.uniform(0.1, 1.0, size=7) * rng.choice([-1.0, 1.0], size=7)
    q = Tensor(p.data + gap, requires_grad=True)
    raw = _leaf(rng, 5, 8)
    g, h = _leaf(rng, 2, 3), _leaf(rng, 2, 3)
    weights = Tensor(rng.uniform(-1.0, 1.0, size=(5, 8)))

    return [
        ("matmul", lambda: grad_check(lambda: sum_all(matmul(a, b)), [a, b])),
        ("add", lambda: grad_check(lambda: sum_all(mul(add(x, y), x)), [x, y])),
        ("sub", lambda: grad_check(lambda: sum_all(mul(sub(x, y), y)), [x, y])),
        ("mul", lambda: grad_check(lambda: sum_all(mul(x, y)), [x, y])),
        ("scale", lambda: grad_check(lambda: sum_all(mul(scale(x, -2.5), x)), [x])),
        ("tanh", lambda: grad_check(lambda: sum_all(tanh(x)), [x])),
        ("relu", lambda: grad_check(lambda: sum_all(mul(relu(r), r)), [r])),
        (
            "cosine_sim",
            lambda: grad_check(lambda: cosine_sim(u, v, COSINE_EPS), [u, v]),
        ),
        (
            "softmax_cross_entropy",
            lambda: grad_check(lambda: softmax_cross_entropy(logits, 2), [logits]),
        ),
        (
            "softmax_cross_entropy[batch]",
            lambda: grad_check(
                lambda: softmax_cross_entropy(batch_logits, [0, 4, 1]), [batch_logits]
            ),
        ),
        ("l1_distance", lambda: grad_check(lambda: l1_distance(p, q), [p, q])),
        (
            "gram_schmidt",
            lambda: grad_check(
                lambda: sum_all(mul(gram_schmidt(raw), weights)), [raw]
            ),
        ),
        (
            "reconstruction_loss",
            lambda: grad_check(lambda: reconstruction_loss(g, h), [g, h]),
        ),
    ]


def compose_check(seed: int = 0, p: int = 3, q: int = 2, n: int = 8) -> float:
    """Orthonormalize, compose and reduce with a fixed random readout."""
    rng = np.random.default_rng(seed)
    basis = OrthonormalBasis.random(p, q, n, rng)
    a_id, b_m = _leaf(rng, 2, p), _leaf(rng, 2, q)
    readout = Tensor(rng.uniform(-1.0, 1.0, size=(2, n)))

    def f() -> Tensor:
        basis.orthonormalize()
        d = compose(basis, a_id, b_m)
        return sum_all(mul(tanh(d.F), readout))

    return grad_check(f, [basis.raw, a_id, b_m])


def composite_check(
    seed: int = 0,
    batch_size: int = 4,
    max_entries: int = 8,
    dims: Sequence[int] = (8, 8, 64),
) -> float:
    """Check the full weighted generator objective at the semantics level, with
    every loss term switched on, against finite differences.

    Args:
        `seed` (int): Seed of the model and data.
        `batch_size` (int): Even batch size.
        `max_entries` (int): Entries sampled per parameter tensor.
        `dims` (Sequence[int]): ``(p, q, N)``.

    Returns:
        float: The maximum relative error.
    """
    p, q, n = dims
    world = WorldSpec(num_identities=4, frames_per_identity=4, seed=seed)
    dataset = generate_world(world)
    batch = BatchStream(dataset, batch_size, seed=seed).batch(0)
    state = ModelState.create(
        ModelDims(p, q, n, world.m, world.num_identities), np.random.default_rng(seed)
    )
    weights = LossWeights(vgg=0.0, adv=0.0)
    params = list(state.named_parameters().values())

    def f() -> Tensor:
        return generator_objective(state, batch, weights, SEMANTICS).total

    return grad_check(f, params, h=COMPOSITE_STEP, max_entries=max_entries, seed=seed)


def run_gradcheck_suite(seed: int = 0) -> List[CheckResult]:
    """Run every check and log one line per result."""
    checks = primitive_checks(seed)
    checks.append(("orthonormalize+compose", lambda: compose_check(seed)))
    checks.append(("generator_objective", lambda: composite_check(seed)))

    results = []
    for name, check in checks:
        result = CheckResult(name, check())
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, "%-28s max error %.3e", name, result.error)
        results.append(result)
    return results

