import numpy as np
import pytest

from conftest import assert_grad_close, numeric_grad, param_grad_check
from model.encoder import EncoderParams, backward, classify, encode, input_gradient, logits, softmax
from model.numerics import make_rng
from model.objectives import ce_loss


def test_initialize_shapes_and_zero_biases(small_params):
    assert small_params.shapes() == {
        "W1": (6, 5),
        "b1": (5,),
        "W2": (5, 4),
        "b2": (4,),
        "Wc": (4, 3),
        "bc": (3,),
    }
    assert not small_params.b1.any() and not small_params.bc.any()
    bound = np.sqrt(6.0 / (6 + 5))
    assert np.all(np.abs(small_params.W1) <= bound)


def test_initialize_is_seed_deterministic():
    a = EncoderParams.initialize(4, 2, make_rng(9))
    b = EncoderParams.initialize(4, 2, make_rng(9))
    for (_, x), (_, y) in zip(a.blocks(), b.blocks()):
        assert np.array_equal(x, y)


def test_rejects_inconsistent_shapes_and_activation(small_params):
    blocks = dict(small_params.blocks())
    with pytest.raises(ValueError):
        EncoderParams(**{**blocks, "b2": np.zeros(7)})
    with pytest.raises(ValueError):
        EncoderParams(**blocks, activation="sigmoid")


def test_encode_single_and_batch_agree(small_params):
    x = make_rng(1).normal(size=(3, 6))
    z_batch, _ = encode(small_params, x)
    z_single, cache = encode(small_params, x[1])
    assert z_batch.shape == (3, 4)
    assert z_single.shape == (4,)
    assert cache.squeeze
    assert np.allclose(z_single, z_batch[1], rtol=0, atol=1e-14)


def test_encode_rejects_wrong_dimension(small_params):
    with pytest.raises(ValueError):
        encode(small_params, np.zeros(5))


def test_dropout_requires_rng_only_in_training_mode(small_params):
    x = np.ones((2, 6))
    with pytest.raises(ValueError):
        encode(small_params, x, dropout_rate=0.5)
    with pytest.raises(ValueError):
        encode(small_params, x, dropout_rate=0.0, rng=make_rng(0))
    with pytest.raises(ValueError):
        encode(small_params, x, dropout_rate=1.0, rng=make_rng(0))


def test_dropout_mask_is_reproducible(small_params):
    x = make_rng(2).normal(size=(4, 6))
    a, _ = encode(small_params, x, 0.5, make_rng(3))
    b, _ = encode(small_params, x, 0.5, make_rng(3))
    c, _ = encode(small_params, x)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_softmax_is_stable_for_large_logits():
    p = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.allclose(p, [[0.5, 0.5, 0.0]])
    assert np.isclose(p.sum(), 1.0)


def test_classify_returns_distribution(small_params):
    z, _ = encode(small_params, make_rng(4).normal(size=(5, 6)))
    probs = classify(small_params, z)
    assert probs.shape == (5, 3)
    assert np.allclose(probs.sum(axis=1), 1.0)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_backward_matches_numeric_gradient(activation):
    params = EncoderParams.initialize(5, 3, make_rng(7), hidden=4, d_z=3, activation=activation)
    # relu の折れ目を避けるため b1 をずらす
    params.b1 += 0.3
    x = make_rng(8).normal(size=(4, 5))
    y = np.array([0, 2, 1, 2])
    r = make_rng(9).normal(size=(4, 3))

    def loss_of(p):
        z, _ = encode(p, x, 0.3, make_rng(11))
        loss, _ = ce_loss(softmax(logits(p, z)), y)
        return loss + float(np.sum(z * r))

    z, cache = encode(params, x, 0.3, make_rng(11))
    _, dlog = ce_loss(softmax(logits(params, z)), y)
    grads = backward(params, cache, dL_dz=r, dL_dlogits=dlog)
    param_grad_check(loss_of, params, grads)


def test_input_gradient_matches_numeric(small_params):
    x = make_rng(12).normal(size=6)
    r = make_rng(13).normal(size=4)

    def loss():
        z, _ = encode(small_params, x)
        return float(z @ r)

    _, cache = encode(small_params, x)
    dx = input_gradient(small_params, cache, dL_dz=r[None, :])
    assert dx.shape == (6,)
    assert_grad_close(dx, numeric_grad(loss, x))


def test_backward_requires_upstream_gradient(small_params):
    _, cache = encode(small_params, np.ones(6))
    with pytest.raises(ValueError):
        backward(small_params, cache)
