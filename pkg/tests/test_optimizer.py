import numpy as np
import pytest

from model.encoder import EncoderParams, Gradients
from model.numerics import make_rng
from model.optimizer import AdamState, adam_step


@pytest.fixture
def params():
    return EncoderParams.initialize(4, 2, make_rng(0), hidden=3, d_z=2)


def _random_grads(params, seed=1):
    rng = make_rng(seed)
    return Gradients(**{name: rng.normal(size=block.shape) for name, block in params.blocks()})


def test_first_step_moves_by_learning_rate(params):
    state = AdamState.for_params(params, lr=0.01)
    grads = _random_grads(params)
    new_state, new_params = adam_step(state, params, grads)
    assert new_state.t == 1
    for name, block in params.blocks():
        step = getattr(new_params, name) - block
        g = getattr(grads, name)
        # 1ステップ目は m̂ = g, v̂ = g²
        assert np.allclose(step, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-15)


def test_step_does_not_mutate_inputs(params):
    state = AdamState.for_params(params)
    before = params.copy()
    adam_step(state, params, _random_grads(params))
    assert state.t == 0
    assert all(not m.any() for m in state.m.values())
    for (_, a), (_, b) in zip(params.blocks(), before.blocks()):
        assert np.array_equal(a, b)


def test_zero_gradient_leaves_params_unchanged(params):
    state = AdamState.for_params(params)
    _, new_params = adam_step(state, params, Gradients.zeros_like(params))
    for (_, a), (_, b) in zip(params.blocks(), new_params.blocks()):
        assert np.array_equal(a, b)


def test_non_finite_gradient_names_the_block(params):
    grads = Gradients.zeros_like(params)
    grads.W2[0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="W2"):
        adam_step(AdamState.for_params(params), params, grads)


def test_shape_mismatch_is_rejected(params):
    grads = Gradients.zeros_like(params)
    grads.b1 = np.zeros(7)
    with pytest.raises(ValueError):
        adam_step(AdamState.for_params(params), params, grads)


def test_negative_learning_rate_is_rejected(params):
    with pytest.raises(ValueError):
        AdamState.for_params(params, lr=-1.0)


def test_zero_learning_rate_keeps_params_bit_identical(params):
    state = AdamState.for_params(params, lr=0.0)
    current = params
    for seed in range(6):
        state, current = adam_step(state, current, _random_grads(params, seed=seed))
    assert state.t == 6
    for (name, a), (_, b) in zip(params.blocks(), current.blocks()):
        assert a.tobytes() == b.tobytes(), name
