from __future__ import annotations

# Typing
from typing import (
    Callable,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

# Internal
from facespace.errors import ContractError, NumericError

# External
from contextlib import contextmanager
import logging
import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]], float, int]

# Adjoint of an op: receives the gradient of the output and returns one gradient
# (or None) per input, in input order.
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block. Every op result becomes a constant."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """
    A dense 64-bit tensor and a node of the reverse-mode computation graph.

    Leaves are created directly from data; every other tensor is produced by an
    op in :mod:`facespace.autodiff.ops`, which records its inputs and adjoint.
    Values are never modified after creation, except by optimizers updating
    leaf parameters between forward passes.

    :ivar data: The values, row-major, dtype float64.
    :vartype data: numpy.ndarray

    :ivar requires_grad: For leaves, whether :func:`backward` should populate
        :attr:`grad`. For op results, whether any input requires a gradient.
    :vartype requires_grad: bool

    :ivar grad: Accumulated gradient (leaves only), same shape as :attr:`data`.
    :vartype grad: Optional[numpy.ndarray]

    :ivar op: Name of the op that produced this tensor, ``"leaf"`` otherwise.
    :vartype op: str
    """

    data: np.ndarray
    requires_grad: bool
    grad: Optional[np.ndarray]
    op: str
    inputs: Tuple[Tensor, ...]

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        *,
        op: str = "leaf",
        inputs: Sequence[Tensor] = (),
        backward_fn: Optional[BackwardFn] = None,
        name: Optional[str] = None,
    ):
        """
        :param data: Values to copy into the tensor.
        :type data: ArrayLike
        :param requires_grad: Track gradients for this leaf.
        :type requires_grad: bool
        :param name: Optional label used in diagnostics.
        :type name: Optional[str]
        """
        array = np.array(data, dtype=np.float64)
        if any(extent <= 0 for extent in array.shape):
            raise ContractError(f"tensor extents must be positive, got {array.shape}")
        if not np.all(np.isfinite(array)):
            label = name or op
            raise NumericError(f"non-finite value produced by node '{label}'")

        self.data = array
        self.requires_grad = requires_grad
        self.grad = None
        self.op = op
        self.inputs = tuple(inputs)
        self._backward = backward_fn
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    # Operators delegate to the op module. Imported here to avoid circular imports.
    def __add__(self, other: Tensor) -> Tensor:
        from facespace.autodiff.ops import add

        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        from facespace.autodiff.ops import sub

        return sub(self, other)

    def __mul__(self, other: Union[Tensor, float]) -> Tensor:
        from facespace.autodiff.ops import mul, scale

        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other: float) -> Tensor:
        from facespace.autodiff.ops import scale

        return scale(self, float(other))

    def __neg__(self) -> Tensor:
        from facespace.autodiff.ops import scale

        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        from facespace.autodiff.ops import matmul

        return matmul(self, other)


def make_result(
    data: np.ndarray,
    op: str,
    inputs: Sequence[Tensor],
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an op's forward value, recording the graph edge only when needed."""
    if _grad_enabled and any(t.requires_grad for t in inputs):
        return Tensor(
            data, requires_grad=True, op=op, inputs=inputs, backward_fn=backward_fn
        )
    return Tensor(data, op=op)


class Graph:
    """
    The ordered node list reachable from a root. Every node appears after all of
    its inputs, and each node appears exactly once.

    :ivar nodes: Nodes in topological order, the root last.
    :vartype nodes: List[Tensor]
    """

    nodes: List[Tensor]

    def __init__(self, root: Tensor):
        self.nodes = []
        visited = set()
        # Iterative post-order DFS; deep chains would overflow recursion.
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.nodes)


def backward(root: Tensor) -> None:
    """
    Populate ``grad`` on every ``requires_grad`` leaf reachable from ``root``.
    Gradients accumulate across calls until :meth:`Tensor.zero_grad`.

    :param root: A scalar (rank-0) tensor.
    :type root: Tensor
    """
    if root.ndim != 0:
        raise ContractError(f"backward() needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return

    graph = Graph(root)
    pending: Dict[int, np.ndarray] = {id(root): np.ones((), dtype=np.float64)}
    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            label = node.name or node.op
            raise NumericError(f"non-finite gradient reached node '{label}'")
        if node.is_leaf:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        assert node._backward is not None
        for parent, parent_grad in zip(node.inputs, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad
    logger.debug("backward over %d nodes", len(graph))
