import math

import numpy as np
import pytest

from tractrlf.core.errors import FormatError, NumericalError, ShapeError, UsageError
from tractrlf.diffcore import ops
from tractrlf.diffcore.checkpoint import load_checkpoint, save_checkpoint
from tractrlf.diffcore.optim import AdamW
from tractrlf.diffcore.params import ModelParams, add_linear, polyak_update
from tractrlf.diffcore.tensor import Tape, Tensor, backward, set_debug


def leaf(rng, *shape, low=-1.0, high=1.0, name=None):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True, name=name)


def weighted_sum(t, w):
    return ops.sum(ops.mul(t, w))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- gradient checks ---


def test_grad_broadcasting_arithmetic(rng, grad_check):
    a, b = leaf(rng, 3, 4, name="a"), leaf(rng, 4, low=0.5, high=2.0, name="b")
    w = rng.normal(size=(3, 4))
    grad_check(lambda: weighted_sum(ops.add(a, b), w), [a, b])
    grad_check(lambda: weighted_sum(ops.sub(a, b), w), [a, b])
    grad_check(lambda: weighted_sum(ops.mul(a, b), w), [a, b])
    grad_check(lambda: weighted_sum(ops.div(a, b), w), [a, b])
    grad_check(lambda: weighted_sum(ops.neg(a), w), [a])


def test_grad_operator_overloads(rng, grad_check):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 3, low=0.5, high=1.5)
    grad_check(lambda: ops.sum((a * b - a) / b + 2.0 * a), [a, b])


def test_grad_batched_matmul_and_linear(rng, grad_check):
    x, w, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5), leaf(rng, 5)
    out_w = rng.normal(size=(2, 3, 5))
    grad_check(lambda: weighted_sum(ops.matmul(x, w), out_w), [x, w])
    grad_check(lambda: weighted_sum(ops.linear(x, w, b), out_w), [x, w, b])


@pytest.mark.parametrize(
    "op, low, high",
    [
        (ops.tanh, -2.0, 2.0),
        (ops.sigmoid, -8.0, 8.0),
        (ops.log, 0.2, 3.0),
        (ops.sqrt, 0.2, 3.0),
        (ops.acos_clamped, -0.9, 0.9),
    ],
)
def test_grad_elementwise(rng, grad_check, op, low, high):
    x = leaf(rng, 3, 5, low=low, high=high)
    w = rng.normal(size=(3, 5))
    grad_check(lambda: weighted_sum(op(x), w), [x])


def test_grad_relu_away_from_kink(rng, grad_check):
    data = rng.uniform(0.1, 1.0, size=(4, 4)) * rng.choice([-1.0, 1.0], size=(4, 4))
    x = Tensor(data, requires_grad=True)
    w = rng.normal(size=(4, 4))
    grad_check(lambda: weighted_sum(ops.relu(x), w), [x])


def test_grad_reductions(rng, grad_check):
    x = leaf(rng, 2, 3, 4)
    w = rng.normal(size=(2, 4))
    grad_check(lambda: weighted_sum(ops.sum(x, axis=1), w), [x])
    grad_check(lambda: weighted_sum(ops.mean(x, axis=1), w), [x])
    grad_check(lambda: ops.mean(ops.mul(x, x)), [x])


def test_grad_softmax_and_layernorm(rng, grad_check):
    x = leaf(rng, 3, 6, low=-2.0, high=2.0)
    gamma, beta = leaf(rng, 6, low=0.5, high=1.5), leaf(rng, 6)
    w = rng.normal(size=(3, 6))
    grad_check(lambda: weighted_sum(ops.softmax_lastdim(x), w), [x])
    grad_check(lambda: weighted_sum(ops.layernorm_lastdim(x, gamma, beta), w), [x, gamma, beta])


def test_grad_batchnorm_train_and_eval(rng, grad_check):
    x = leaf(rng, 5, 3, low=-2.0, high=2.0)
    gamma, beta = leaf(rng, 3, low=0.5, high=1.5), leaf(rng, 3)
    stats = ops.RunningStats(np.zeros(3), np.ones(3))
    w = rng.normal(size=(5, 3))
    grad_check(lambda: weighted_sum(ops.batchnorm_lastdim(x, gamma, beta, stats, training=True), w), [x, gamma, beta])
    frozen = ops.RunningStats(np.full(3, 0.2), np.full(3, 1.5))
    grad_check(lambda: weighted_sum(ops.batchnorm_lastdim(x, gamma, beta, frozen, training=False), w), [x, gamma, beta])


def test_grad_shape_ops(rng, grad_check):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 4)
    w = rng.normal(size=(2, 7))
    grad_check(lambda: weighted_sum(ops.concat_lastdim([a, b]), w), [a, b])
    x = leaf(rng, 2, 3, 4)
    w_flat, w_swapped = rng.normal(size=(6, 4)), rng.normal(size=(2, 4, 3))
    grad_check(lambda: weighted_sum(ops.reshape(x, (6, 4)), w_flat), [x])
    grad_check(lambda: weighted_sum(ops.swapaxes(x, 1, 2), w_swapped), [x])


def test_grad_indexing_with_repeats(rng, grad_check):
    x = leaf(rng, 5, 3)
    key = np.array([0, 2, 2, 4])
    w = rng.normal(size=(4, 3))
    grad_check(lambda: weighted_sum(x[key], w), [x])
    w_cols = rng.normal(size=(5, 2))
    grad_check(lambda: weighted_sum(x[:, 1:], w_cols), [x])


def test_grad_embedding_lookup(rng, grad_check):
    table = leaf(rng, 4, 3)
    idx = np.array([[1, 1], [3, 0]])
    w = rng.normal(size=(2, 2, 3))
    grad_check(lambda: weighted_sum(ops.embedding_lookup(table, idx), w), [table])


def test_grad_bce_with_logits(rng, grad_check):
    z = leaf(rng, 6, low=-5.0, high=5.0)
    y = (rng.random(6) < 0.5).astype(np.float64)
    grad_check(lambda: ops.mean(ops.bce_with_logits(z, y)), [z])


def test_grad_accumulates_over_reuse(rng):
    x = leaf(rng, 3)
    with Tape() as tape:
        loss = ops.sum(ops.add(ops.mul(x, 2.0), ops.mul(x, 3.0)))
    backward(tape, loss)
    assert np.allclose(x.grad, 5.0)


# --- forward examples ---


def test_softmax_examples():
    assert np.allclose(ops.softmax_lastdim(np.zeros((1, 2))).data, 0.5)
    big = ops.softmax_lastdim(np.array([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big)) and big[0, 0] == pytest.approx(1.0)


def test_relu_gradient_at_zero_is_zero():
    x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.relu(x))
    backward(tape, loss)
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_acos_clamps_and_stops_gradient_at_the_boundary():
    x = Tensor(np.array([1.0, -1.0, 0.0]), requires_grad=True)
    with Tape() as tape:
        y = ops.acos_clamped(x)
        loss = ops.sum(y)
    backward(tape, loss)
    assert y.data[0] == pytest.approx(math.acos(1.0 - 1e-6))
    assert y.data[1] == pytest.approx(math.acos(-1.0 + 1e-6))
    assert x.grad[0] == 0.0 and x.grad[1] == 0.0
    assert x.grad[2] == pytest.approx(-1.0)


def test_batchnorm_train_updates_running_stats():
    stats = ops.RunningStats(np.zeros(1), np.ones(1))
    out = ops.batchnorm_lastdim(np.array([[1.0], [3.0]]), np.ones(1), np.zeros(1), stats, training=True)
    assert np.allclose(out.data[:, 0], np.array([-1.0, 1.0]) / math.sqrt(1.0 + 1e-5))
    assert stats.mean[0] == pytest.approx(0.2)
    assert stats.var[0] == pytest.approx(0.9 + 0.1 * 2.0)


def test_batchnorm_eval_uses_running_stats():
    stats = ops.RunningStats(np.array([1.0]), np.array([4.0]))
    out = ops.batchnorm_lastdim(np.array([[5.0]]), np.ones(1), np.zeros(1), stats, training=False)
    assert out.data[0, 0] == pytest.approx(4.0 / math.sqrt(4.0 + 1e-5))


def test_batchnorm_train_needs_two_samples():
    stats = ops.RunningStats(np.zeros(2), np.ones(2))
    with pytest.raises(UsageError):
        ops.batchnorm_lastdim(np.ones((1, 2)), np.ones(2), np.zeros(2), stats, training=True)


def test_dropout_eval_is_identity_and_train_is_seeded():
    x = Tensor(np.ones((4, 4)))
    assert ops.dropout(x, 0.5, None, training=False) is x
    a = ops.dropout(x, 0.5, np.random.default_rng(0), training=True).data
    b = ops.dropout(x, 0.5, np.random.default_rng(0), training=True).data
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    with pytest.raises(UsageError):
        ops.dropout(x, 1.0, np.random.default_rng(0), training=True)


def test_shape_and_loss_errors():
    with pytest.raises(ShapeError):
        ops.matmul(np.ones((2, 3)), np.ones((4, 2)))
    with pytest.raises(ShapeError):
        ops.add(np.ones((2, 3)), np.ones((4,)))
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ops.mul(x, 2.0)
    with pytest.raises(UsageError):
        backward(tape, y)


def test_debug_mode_catches_non_finite_values():
    set_debug(True)
    try:
        with np.errstate(invalid="ignore"), pytest.raises(NumericalError):
            ops.log(np.array([-1.0]))
    finally:
        set_debug(False)


def test_nothing_recorded_outside_a_tape():
    x = Tensor(np.ones(2), requires_grad=True)
    y = ops.mul(x, 3.0)
    assert not y.requires_grad and y.parents == ()


# --- parameters and optimiser ---


def test_adamw_decay_only_when_gradient_is_zero():
    params = ModelParams()
    params.add("w", np.array([1.0]))
    AdamW(params, lr=1.0, weight_decay=0.1).step({"w": np.zeros(1)})
    assert params["w"].data[0] == pytest.approx(0.9)


def test_adamw_first_step_moves_by_lr():
    params = ModelParams()
    params.add("w", np.array([1.0, 1.0]))
    AdamW(params, lr=0.01).step({"w": np.array([2.0, -3.0])})
    assert np.allclose(params["w"].data, [0.99, 1.01], atol=1e-8)


def test_frozen_segments_are_untouched():
    rng = np.random.default_rng(0)
    params = ModelParams()
    add_linear(params, "enc", 3, 2, rng)
    add_linear(params, "head", 2, 1, rng)
    params.set_trainable(["enc"], False)
    before = params.state()
    x = rng.normal(size=(4, 3))
    with Tape() as tape:
        h = ops.relu(ops.linear(x, params["enc.W"], params["enc.b"]))
        loss = ops.mean(ops.linear(h, params["head.W"], params["head.b"]))
    grads = backward(tape, loss, params)
    assert set(grads) == {"head.W", "head.b"}
    AdamW(params, lr=0.1, weight_decay=0.5).step(grads)
    after = params.state()
    assert np.array_equal(before["enc.W"], after["enc.W"])
    assert np.array_equal(before["enc.b"], after["enc.b"])
    assert not np.array_equal(before["head.W"], after["head.W"])


def test_optimizer_prefix_restricts_updates():
    params = ModelParams()
    params.add("a.w", np.ones(2))
    params.add("b.w", np.ones(2))
    AdamW(params, lr=0.1, prefixes=("b.",)).step({"a.w": np.ones(2), "b.w": np.ones(2)})
    assert np.array_equal(params["a.w"].data, np.ones(2))
    assert np.allclose(params["b.w"].data, 0.9)


def test_param_bookkeeping():
    params = ModelParams()
    add_linear(params, "l1", 4, 3, np.random.default_rng(0))
    assert params.names() == ["l1.W", "l1.b"]
    assert params.n_params() == 15
    with pytest.raises(UsageError):
        params.add("l1.W", np.zeros(1))
    clone = params.copy()
    clone["l1.W"].data[...] = 0.0
    assert params["l1.W"].data.any()


def test_polyak_update():
    online, target = ModelParams(), ModelParams()
    online.add("w", np.full(3, 2.0))
    target.add("w", np.zeros(3))
    polyak_update(target, online, 0.5)
    assert np.allclose(target["w"].data, 1.0)
    polyak_update(target, online, 1.0)
    assert np.allclose(target["w"].data, 2.0)


# --- checkpoints ---


def test_checkpoint_is_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    params = ModelParams()
    add_linear(params, "layer", 5, 4, rng)
    params.add("scale", np.array(3.25), trainable=False)
    save_checkpoint(tmp_path / "p.ckpt", params)
    back = load_checkpoint(tmp_path / "p.ckpt")
    assert back.names() == params.names()
    for name in params:
        assert np.array_equal(back[name].data, params[name].data)
        assert back.is_trainable(name) == params.is_trainable(name)


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOT-A-CKPT-FILE")
    with pytest.raises(FormatError):
        load_checkpoint(path)
