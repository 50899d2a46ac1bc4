from facespace.api.model import (
    classify_identity,
    cross_reenact,
    discriminate,
    encode,
    generate,
)
from facespace.autodiff import Tensor, no_grad, softmax_cross_entropy
from facespace.errors import ContractError, DimensionError
from facespace.objects import ModelDims, ModelState

import numpy as np
import pytest

DIMS = ModelDims(p=3, q=2, n=8, m=12, num_identities=4, hidden=6)


def _state(seed=0, use_basis=True):
    return ModelState.create(DIMS, np.random.default_rng(seed), use_basis)


def test_encode_zero_observation_is_finite():
    """A fresh model encodes a zero observation to finite descriptors."""
    state = _state()
    state.begin_pass()
    d = encode(state, np.zeros(12), np.zeros(12))
    for t in (d.a_id, d.b_m, d.w_id, d.w_m, d.F):
        assert np.all(np.isfinite(t.data))
    assert d.F.shape == (8,)
    assert d.a_id.shape == (2,) and not d.batched
    assert generate(state, d).shape == (12,)


def test_encode_needs_begin_pass():
    """Encoding before orthonormalizing the basis is a contract error."""
    with pytest.raises(ContractError):
        encode(_state(), np.zeros(12), np.zeros(12))


def test_encode_checks_observation_width():
    """Observations must be M wide."""
    state = _state()
    state.begin_pass()
    with pytest.raises(DimensionError):
        encode(state, np.zeros(10), np.zeros(10))
    with pytest.raises(DimensionError):
        encode(state, np.zeros((2, 12)), np.zeros((3, 12)))


def test_generate_is_deterministic():
    """Two identical calls decode bitwise-identical outputs."""
    state = _state(seed=1)
    x = np.random.default_rng(2).normal(size=(5, 12))
    state.begin_pass()
    first = generate(state, encode(state, x, x)).data
    state.begin_pass()
    second = generate(state, encode(state, x, x)).data
    assert first.shape == (5, 12)
    assert np.array_equal(first, second)


def test_cross_reenact_mixes_sources():
    """Swapping the driving observation changes only the motion descriptor."""
    state = _state(seed=3)
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(2, 12)), rng.normal(size=(2, 12))
    with no_grad():
        out = cross_reenact(state, a, b)
        state.begin_pass()
        swapped = encode(state, a, b)
        own = encode(state, a, a)
    assert out.shape == (2, 12)
    assert np.array_equal(swapped.w_id.data, own.w_id.data)
    assert not np.array_equal(swapped.w_m.data, own.w_m.data)


def test_logit_heads():
    """The discriminator and classifier emit one logit per identity."""
    state = _state()
    x = np.random.default_rng(5).normal(size=(3, 12))
    state.begin_pass()
    d = encode(state, x, x)
    assert discriminate(state, d.w_m).shape == (3, 4)
    assert classify_identity(state, d.w_id).shape == (3, 4)
    assert state.disc.spec.num_layers == 3


def test_logits_stay_finite_for_large_descriptors():
    """Descriptors with norms up to 1e3 give finite logits and losses."""
    state = _state(seed=7)
    rng = np.random.default_rng(8)
    for norm in (1.0, 1e2, 1e3):
        w = rng.normal(size=(6, 8))
        w *= norm / np.linalg.norm(w, axis=1, keepdims=True)
        for head in (discriminate, classify_identity):
            logits = head(state, Tensor(w))
            assert np.all(np.isfinite(logits.data))
            loss = softmax_cross_entropy(logits, np.arange(6) % 4)
            assert np.isfinite(loss.item())


def test_bypass_model_feeds_decoder_directly():
    """Without subspaces the encoders emit N-wide descriptors."""
    state = _state(use_basis=False)
    assert not state.uses_basis
    x = np.random.default_rng(6).normal(size=(2, 12))
    state.begin_pass()
    d = encode(state, x, x)
    assert d.w_id.shape == (2, 8)
    assert np.array_equal(d.F.data, d.w_id.data + d.w_m.data)


def test_parameter_split():
    """The discriminator is excluded from the generator's parameters."""
    state = _state()
    gen = state.generator_parameters()
    disc = state.discriminator_parameters()
    assert set(gen).isdisjoint(disc)
    assert set(gen) | set(disc) == set(state.named_parameters())
    assert "basis.raw" in gen


def test_parameter_arrays_round_trip():
    """Rebuilding a model from its arrays reproduces every parameter."""
    state = _state(seed=7)
    arrays = state.parameter_arrays()
    rebuilt = ModelState.from_arrays(arrays)
    assert list(rebuilt.parameter_arrays()) == list(arrays)
    for name, value in rebuilt.parameter_arrays().items():
        assert np.array_equal(value, arrays[name])
