from facespace.autodiff import (
    Graph,
    Tensor,
    add,
    backward,
    cosine_sim,
    detach,
    elementwise,
    gram_schmidt,
    grad_check,
    l1_distance,
    matmul,
    mul,
    no_grad,
    relu,
    scale,
    softmax_cross_entropy,
    sum_all,
    tanh,
)
from facespace.api.verification import (
    GRADCHECK_TOLERANCE,
    compose_check,
    primitive_checks,
)
from facespace.errors import (
    ContractError,
    DegenerateBasisError,
    DimensionError,
    NumericError,
    TargetIndexError,
)

import numpy as np
import pytest


def test_matmul_value_and_gradient():
    """The product and its adjoints match the closed forms."""
    a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    b = Tensor([[5.0], [6.0]], requires_grad=True)
    out = matmul(a, b)
    assert np.array_equal(out.data, [[17.0], [39.0]])

    backward(sum_all(out))
    assert np.array_equal(a.grad, [[5.0, 6.0], [5.0, 6.0]])
    assert np.array_equal(b.grad, [[4.0], [6.0]])


def test_no_broadcasting():
    """Elementwise ops refuse operands of different shapes."""
    with pytest.raises(DimensionError):
        add(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 3))))
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_backward_needs_scalar_root():
    """Only a rank-0 tensor can start backpropagation."""
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(scale(x, 2.0))


def test_shared_node_accumulates():
    """A node used twice receives the sum of both gradient paths."""
    x = Tensor([1.5, -2.0], requires_grad=True)
    backward(sum_all(mul(x, x)))
    assert np.array_equal(x.grad, [3.0, -4.0])


def test_gradients_accumulate_until_cleared():
    """Two backward passes add up until zero_grad is called."""
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(sum_all(scale(x, 3.0)))
    backward(sum_all(scale(x, 3.0)))
    assert np.array_equal(x.grad, [6.0, 6.0])
    x.zero_grad()
    assert x.grad is None


def test_graph_is_topological():
    """Every node appears once and after all of its inputs."""
    x = Tensor(np.ones(3), requires_grad=True)
    y = tanh(x)
    root = sum_all(add(mul(y, y), y))
    graph = Graph(root)
    position = {id(node): i for i, node in enumerate(graph)}
    assert len(position) == len(graph)
    for node in graph:
        for parent in node.inputs:
            if parent.requires_grad:
                assert position[id(parent)] < position[id(node)]
    assert graph.nodes[-1] is root


def test_deep_chain_does_not_recurse():
    """Backpropagation over a long chain works without recursion limits."""
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(5000):
        y = scale(y, 1.0)
    backward(sum_all(y))
    assert np.array_equal(x.grad, [1.0])


def test_no_grad_builds_no_graph():
    """Results computed under no_grad are constants."""
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = mul(x, x)
    assert not y.requires_grad
    assert y.is_leaf


def test_detach_stops_gradients():
    """Gradients do not flow through a detached copy."""
    x = Tensor([2.0], requires_grad=True)
    backward(sum_all(add(x, mul(detach(x), x))))
    assert np.array_equal(x.grad, [3.0])


def test_non_finite_values_are_rejected():
    """Creating a tensor holding NaN or infinity raises a numeric error."""
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([np.inf])


def test_relu_subgradient_at_zero():
    """The relu gradient at exactly zero is 0."""
    x = Tensor([0.0, 1.0, -1.0], requires_grad=True)
    backward(sum_all(relu(x)))
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_l1_distance_tie_subgradient():
    """Equal entries contribute a zero subgradient."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([1.0, 0.0], requires_grad=True)
    out = l1_distance(a, b)
    assert out.item() == 2.0
    backward(out)
    assert np.array_equal(a.grad, [0.0, 1.0])
    assert np.array_equal(b.grad, [0.0, -1.0])


def test_cosine_sim_of_zero_vector_is_finite():
    """The clamped denominator keeps value and gradient finite at zero."""
    u = Tensor(np.zeros(4), requires_grad=True)
    v = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
    out = cosine_sim(u, v, 1e-8)
    assert out.item() == 0.0
    backward(out)
    assert np.all(np.isfinite(u.grad))
    assert np.all(np.isfinite(v.grad))


def test_cross_entropy_uniform_logits():
    """Uniform logits give log C for any target."""
    for classes in (2, 5, 16):
        out = softmax_cross_entropy(Tensor(np.zeros(classes)), classes - 1)
        assert abs(out.item() - np.log(classes)) < 1e-12


def test_cross_entropy_dominant_logit():
    """A dominant correct logit gives a loss near zero without overflow."""
    out = softmax_cross_entropy(Tensor([1000.0, 0.0, -1000.0]), 0)
    assert 0.0 <= out.item() < 1e-12


def test_cross_entropy_batch_is_mean():
    """A batch of logits averages the per-row losses."""
    logits = np.array([[0.0, 1.0, 2.0], [3.0, -1.0, 0.5]])
    batch = softmax_cross_entropy(Tensor(logits), [2, 0]).item()
    rows = [
        softmax_cross_entropy(Tensor(logits[0]), 2).item(),
        softmax_cross_entropy(Tensor(logits[1]), 0).item(),
    ]
    assert abs(batch - np.mean(rows)) < 1e-12


def test_cross_entropy_target_out_of_range():
    """Class indices outside [0, C) raise an index error."""
    with pytest.raises(TargetIndexError):
        softmax_cross_entropy(Tensor(np.zeros(4)), 4)
    with pytest.raises(IndexError):
        softmax_cross_entropy(Tensor(np.zeros((2, 4))), [0, -1])


def test_gram_schmidt_matches_householder_qr():
    """Rows match numpy's QR factor up to row signs."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        raw = rng.normal(size=(6, 10))
        q = gram_schmidt(Tensor(raw)).data
        reference, r = np.linalg.qr(raw.T)
        reference = (reference * np.sign(np.diag(r))).T
        assert np.max(np.abs(q - reference)) < 1e-8


def test_gram_schmidt_rejects_dependent_rows():
    """A row in the span of the previous rows is reported with its index."""
    raw = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, -3.0, 0.0]])
    with pytest.raises(DegenerateBasisError) as e:
        gram_schmidt(Tensor(raw))
    assert e.value.row == 2


def test_gram_schmidt_rejects_wide_input():
    """More rows than columns cannot be orthonormal."""
    with pytest.raises(DimensionError):
        gram_schmidt(Tensor(np.ones((4, 3))))


def test_every_primitive_passes_grad_check():
    """Reverse-mode gradients of every op agree with finite differences."""
    for name, check in primitive_checks(seed=3):
        error = check()
        assert error < GRADCHECK_TOLERANCE, name


def test_orthonormalize_compose_grad_check():
    """Gradients flow correctly through Gram-Schmidt and composition."""
    assert compose_check(seed=1) < GRADCHECK_TOLERANCE


def test_grad_check_leaves_parameters_intact():
    """Finite differences restore every perturbed entry."""
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    before = x.numpy()
    grad_check(lambda: sum_all(tanh(x)), [x])
    assert np.array_equal(x.data, before)
    assert x.grad is None


def test_grad_check_rejects_bad_step():
    """The finite-difference step must be positive."""
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ContractError):
        grad_check(lambda: sum_all(x), [x], h=0.0)


def test_elementwise_dispatch():
    """Elementwise ops are reachable by name and check their operands."""
    a = Tensor(np.array([[-1.0, 2.0]]))
    b = Tensor(np.array([[3.0, 0.5]]))
    assert elementwise("add", a, b).data.tolist() == [[2.0, 2.5]]
    assert elementwise("mul", a, b).data.tolist() == [[-3.0, 1.0]]
    assert elementwise("scale", a, constant=2.0).data.tolist() == [[-2.0, 4.0]]
    assert elementwise("relu", a).data.tolist() == [[0.0, 2.0]]
    with pytest.raises(ContractError):
        elementwise("sub", a)
    with pytest.raises(ContractError):
        elementwise("scale", a)
    with pytest.raises(ContractError):
        elementwise("exp", a)


def _two_objectives(x: Tensor, y: Tensor):
    f = sum_all(tanh(matmul(x, y)))
    g = sum_all(mul(x, x))
    return f, g


def test_backward_is_linear():
    """Gradients of a weighted sum are the weighted sum of gradients."""
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
    y = Tensor(rng.uniform(-1, 1, size=(4, 2)), requires_grad=True)
    alpha, beta = 0.7, -1.3

    f, _ = _two_objectives(x, y)
    backward(f)
    fx, fy = x.grad.copy(), y.grad.copy()
    x.zero_grad()
    y.zero_grad()
    _, g = _two_objectives(x, y)
    backward(g)
    gx = x.grad.copy()
    x.zero_grad()
    y.zero_grad()

    f, g = _two_objectives(x, y)
    backward(add(scale(f, alpha), scale(g, beta)))
    assert np.allclose(x.grad, alpha * fx + beta * gx, rtol=1e-12, atol=1e-12)
    assert np.allclose(y.grad, alpha * fy, rtol=1e-12, atol=1e-12)


def test_repeated_backward_is_bitwise_identical():
    """Rebuilding and differentiating the same graph gives identical bits."""
    rng = np.random.default_rng(12)
    raw = rng.uniform(-1, 1, size=(3, 5))
    weights = rng.uniform(-1, 1, size=(5, 5))
    results = []
    for _ in range(2):
        d = Tensor(raw, requires_grad=True)
        w = Tensor(weights, requires_grad=True)
        q = gram_schmidt(d)
        loss = sum_all(tanh(matmul(q, w)))
        backward(loss)
        results.append((loss.item(), d.grad.copy(), w.grad.copy()))
    (v1, d1, w1), (v2, d2, w2) = results
    assert v1 == v2
    assert np.array_equal(d1, d2)
    assert np.array_equal(w1, w2)
