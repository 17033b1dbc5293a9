#!/usr/bin/env python3
"""
Tensor engine tests
- convolution / transposed convolution / pooling against loop oracles
- batchnorm train + eval formulas
- pointwise ops and the reverse pass
"""

import os
import sys

import numpy as np

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from plumenet.core import (  # noqa: E402
    BatchNormState, Graph, Tensor, backward, batchnorm2d, channel_gate, concat_channels, conv2d,
    conv_transpose2d, grad_check, maxpool2d, mul, pointwise, relu, scale, sigmoid, sum_all,
)
from plumenet.errors import ConfigError, PlumeNetError, ShapeError  # noqa: E402


# =================== Loop oracles ===================

def naive_conv2d(x, w, b, stride, padding):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for a in range(n):
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    total = b[o]
                    for i in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                total += xp[a, i, r * stride + u, c * stride + v] * w[o, i, u, v]
                    out[a, o, r, c] = total
    return out


def naive_conv_transpose2d(x, w, stride):
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    out = np.zeros((n, cout, (h - 1) * stride + kh, (wd - 1) * stride + kw))
    for a in range(n):
        for i in range(cin):
            for r in range(h):
                for c in range(wd):
                    for o in range(cout):
                        out[a, o, r * stride:r * stride + kh, c * stride:c * stride + kw] += x[a, i, r, c] * w[i, o]
    return out


def naive_maxpool(x, k):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // k, w // k))
    for a in range(n):
        for ch in range(c):
            for r in range(h // k):
                for col in range(w // k):
                    out[a, ch, r, col] = x[a, ch, r * k:(r + 1) * k, col * k:(col + 1) * k].max()
    return out


# =================== Convolutions ===================

def test_conv2d_sum_of_ones():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 9.0


def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 6))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    assert np.array_equal(out.data, x)


def test_conv2d_matches_loop_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    assert np.max(np.abs(out.data - naive_conv2d(x, w, b, 1, 1))) < 1e-12


def test_conv2d_randomized_shapes():
    rng = np.random.default_rng(2)
    for _ in range(6):
        cin, cout = rng.integers(1, 5, size=2)
        k = int(rng.choice([1, 3]))
        h, w = rng.integers(k, 9, size=2)
        stride = 1 if (h - k) % 2 or (w - k) % 2 else int(rng.integers(1, 3))
        x = rng.normal(size=(2, cin, h, w))
        wt = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        out = conv2d(Tensor(x), Tensor(wt), Tensor(b), stride=stride)
        assert np.max(np.abs(out.data - naive_conv2d(x, wt, b, stride, 0))) < 1e-12


def test_conv2d_channel_mismatch():
    try:
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    except ShapeError as e:
        assert e.op == "conv2d"
    else:
        raise AssertionError("expected ShapeError")


def test_conv_transpose_single_pixel():
    kernel = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out = conv_transpose2d(Tensor(np.ones((1, 1, 1, 1))), Tensor(kernel), stride=2)
    assert np.array_equal(out.data[0, 0], kernel[0, 0])


def test_conv_transpose_doubles_extent():
    rng = np.random.default_rng(3)
    out = conv_transpose2d(Tensor(rng.normal(size=(1, 1, 8, 8))), Tensor(rng.normal(size=(1, 1, 2, 2))))
    assert out.shape == (1, 1, 16, 16)


def test_conv_transpose_matches_loop_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 4, 5))
    w = rng.normal(size=(3, 2, 2, 2))
    out = conv_transpose2d(Tensor(x), Tensor(w), stride=2)
    assert np.max(np.abs(out.data - naive_conv_transpose2d(x, w, 2))) < 1e-12


def test_conv_transpose_is_conv_adjoint():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 2, 3, 3))
    y = rng.normal(size=(1, 3, 6, 6))
    w = rng.normal(size=(2, 3, 2, 2))
    # <T(x), y> == <x, C(y)> with C the stride-2 correlation using the same kernel
    left = np.sum(conv_transpose2d(Tensor(x), Tensor(w)).data * y)
    right = np.sum(x * conv2d(Tensor(y), Tensor(w), stride=2).data)
    assert abs(left - right) < 1e-10


# =================== Pooling / normalization ===================

def test_maxpool_window_max():
    out, _ = maxpool2d(Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)))
    assert out.item() == 4.0


def test_maxpool_tie_routes_to_first_element():
    x = Tensor(np.full((1, 1, 4, 4), 2.5), requires_grad=True)
    with Graph() as g:
        out, _ = maxpool2d(x)
        loss = sum_all(out)
    assert np.all(out.data == 2.5)
    backward(g, loss)
    expected = np.zeros((4, 4))
    expected[0::2, 0::2] = 1.0
    assert np.array_equal(x.grad[0, 0], expected)


def test_maxpool_matches_loop_oracle():
    x = np.random.default_rng(6).normal(size=(1, 3, 8, 8))
    out, argmax = maxpool2d(Tensor(x))
    assert np.array_equal(out.data, naive_maxpool(x, 2))
    assert argmax.shape == (1, 3, 4, 4)


def test_maxpool_rejects_odd_extent():
    try:
        maxpool2d(Tensor(np.ones((1, 1, 5, 4))))
    except ShapeError as e:
        assert e.dimension == "height"
    else:
        raise AssertionError("expected ShapeError")


def test_batchnorm_constant_channel_is_zero():
    out = batchnorm2d(Tensor(np.full((2, 1, 3, 3), 7.0)), Tensor(np.ones(1)), Tensor(np.zeros(1)),
                      BatchNormState.fresh(1))
    assert np.allclose(out.data, 0.0)


def test_batchnorm_train_normalizes():
    x = np.random.default_rng(7).normal(3.0, 2.0, size=(4, 2, 5, 5))
    state = BatchNormState.fresh(2)
    out = batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, mode="train")
    assert np.all(np.abs(out.data.mean(axis=(0, 2, 3))) < 1e-12)
    assert np.all(np.abs(out.data.var(axis=(0, 2, 3)) - 1.0) < 1e-4)
    # running <- 0.9 * running + 0.1 * batch
    assert np.allclose(state.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    assert np.allclose(state.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))


def test_batchnorm_eval_hand_formula():
    x = np.array([1.0, 2.0, 4.0]).reshape(1, 1, 1, 3)
    state = BatchNormState(np.array([2.0]), np.array([4.0]))
    out = batchnorm2d(Tensor(x), Tensor(np.array([1.5])), Tensor(np.array([0.25])), state, mode="eval", eps=1e-5)
    expected = (x - 2.0) / np.sqrt(4.0 + 1e-5) * 1.5 + 0.25
    assert np.max(np.abs(out.data - expected)) < 1e-12
    assert state.running_mean[0] == 2.0


# =================== Pointwise ===================

def test_pointwise_values():
    assert sigmoid(Tensor(0.0)).item() == 0.5
    assert relu(Tensor(-3.2)).item() == 0.0
    assert relu(Tensor(3.2)).item() == 3.2
    assert pointwise("scale", Tensor(2.0), 1.5).item() == 3.0


def test_sigmoid_stays_open_interval():
    s = sigmoid(Tensor(np.array([-1e4, -40.0, 40.0, 1e4]))).data
    assert np.all(s > 0.0) and np.all(s < 1.0)


def test_concat_channels_width():
    out = concat_channels(Tensor(np.zeros((1, 64, 4, 4))), Tensor(np.ones((1, 64, 4, 4))))
    assert out.shape == (1, 128, 4, 4)
    assert out.data[0, 64:].min() == 1.0


def test_pointwise_unknown_kind():
    try:
        pointwise("tanh", Tensor(1.0))
    except ConfigError as e:
        assert isinstance(e, PlumeNetError) and e.field == "pointwise.kind"
    else:
        raise AssertionError("expected ConfigError")


def test_batchnorm_unknown_mode():
    x = Tensor(np.ones((1, 1, 2, 2)))
    try:
        batchnorm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), BatchNormState.fresh(1), mode="bogus")
    except ConfigError as e:
        assert e.field == "batchnorm2d.mode"
    else:
        raise AssertionError("expected ConfigError")



# =================== Reverse pass ===================

def test_backward_sum_is_ones():
    x = Tensor(np.random.default_rng(8).normal(size=(2, 3)), requires_grad=True)
    with Graph() as g:
        y = sum_all(x)
    grads = backward(g, y)
    assert np.array_equal(grads[x], np.ones((2, 3)))


def test_backward_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Graph() as g:
        y = sigmoid(x)
    backward(g, y)
    assert x.grad == 0.25


def test_backward_accumulates_use_sites():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with Graph() as g:
        y = sum_all(mul(x, x))
    backward(g, y)
    assert np.array_equal(x.grad, 2.0 * x.data)


def test_no_tape_outside_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    y = relu(x)
    assert y.node is None


def test_conv_relu_sum_finite_differences():
    rng = np.random.default_rng(9)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)))
    x = Tensor(rng.normal(size=(1, 2, 5, 5)))
    assert grad_check(lambda t: sum_all(relu(conv2d(t, w, padding=1))), x) < 1e-6
    assert grad_check(lambda t: sum_all(relu(conv2d(x, t, padding=1))), w) < 1e-6


def test_grad_check_quadratic():
    x = Tensor(np.random.default_rng(10).normal(size=(3, 4)))
    assert grad_check(lambda t: sum_all(mul(t, t)), x) < 1e-9


def test_batchnorm_train_gradient():
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(2, 2, 3, 3)))
    weights = Tensor(rng.normal(size=(2, 2, 3, 3)))

    def f(t):
        return sum_all(mul(batchnorm2d(t, Tensor(np.ones(2)), Tensor(np.zeros(2)), BatchNormState.fresh(2)), weights))

    assert grad_check(f, x) < 1e-6


# =================== Randomized oracle sweeps ===================

def test_conv2d_hundred_random_shapes_with_padding():
    rng = np.random.default_rng(12)
    for _ in range(100):
        cin, cout = (int(v) for v in rng.integers(1, 4, size=2))
        k = int(rng.choice([1, 2, 3]))
        padding = int(rng.integers(0, 3))
        h, w = (int(v) for v in rng.integers(k, 8, size=2))
        stride = int(rng.integers(1, 3))
        if (h + 2 * padding - k) % stride or (w + 2 * padding - k) % stride:
            stride = 1
        x = rng.normal(size=(2, cin, h, w))
        wt = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        out = conv2d(Tensor(x), Tensor(wt), Tensor(b), stride=stride, padding=padding)
        assert np.max(np.abs(out.data - naive_conv2d(x, wt, b, stride, padding))) < 1e-12


def test_conv_transpose_random_shapes():
    rng = np.random.default_rng(13)
    for _ in range(20):
        cin, cout = (int(v) for v in rng.integers(1, 4, size=2))
        h, w = (int(v) for v in rng.integers(1, 6, size=2))
        k = int(rng.choice([1, 2, 3]))
        stride = int(rng.integers(1, 3))
        x = rng.normal(size=(2, cin, h, w))
        wt = rng.normal(size=(cin, cout, k, k))
        out = conv_transpose2d(Tensor(x), Tensor(wt), stride=stride)
        assert np.max(np.abs(out.data - naive_conv_transpose2d(x, wt, stride))) < 1e-12


def test_maxpool_random_shapes():
    rng = np.random.default_rng(14)
    for _ in range(20):
        c = int(rng.integers(1, 4))
        h, w = (2 * int(v) for v in rng.integers(1, 6, size=2))
        x = rng.normal(size=(2, c, h, w))
        out, _ = maxpool2d(Tensor(x))
        assert np.array_equal(out.data, naive_maxpool(x, 2))


# =================== Per-op gradients ===================

def weighted_sum(t, seed):
    return sum_all(mul(t, Tensor(np.random.default_rng(seed).normal(size=t.shape))))


def distinct_values(rng, shape):
    return rng.permutation(int(np.prod(shape))).reshape(shape) * 0.1 + rng.uniform(0.0, 0.01)


def test_per_op_gradients_over_seeds():
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        x = Tensor(rng.normal(size=(2, 3, 4, 4)))
        other = Tensor(rng.normal(size=(2, 3, 4, 4)))
        wt = Tensor(rng.normal(size=(3, 2, 2, 2)))
        gate = Tensor(rng.uniform(0.1, 0.9, size=(2, 1, 4, 4)))
        state = BatchNormState(rng.normal(size=3), rng.uniform(0.5, 2.0, size=3))
        gamma, beta = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
        cases = {
            "conv_transpose2d.x": (lambda t: weighted_sum(conv_transpose2d(t, wt), seed), x),
            "conv_transpose2d.w": (lambda t: weighted_sum(conv_transpose2d(x, t), seed), wt),
            "maxpool2d": (lambda t: weighted_sum(maxpool2d(t)[0], seed),
                          Tensor(distinct_values(rng, (2, 3, 4, 4)))),
            "sigmoid": (lambda t: weighted_sum(sigmoid(t), seed), x),
            "concat_channels": (lambda t: weighted_sum(concat_channels(t, other), seed), x),
            "channel_gate.alpha": (lambda t: weighted_sum(channel_gate(t, x), seed), gate),
            "channel_gate.x": (lambda t: weighted_sum(channel_gate(gate, t), seed), x),
            "mul": (lambda t: weighted_sum(mul(t, other), seed), x),
            "scale": (lambda t: weighted_sum(scale(t, -1.7), seed), x),
            "batchnorm2d.eval.x": (lambda t: weighted_sum(batchnorm2d(t, gamma, beta, state, mode="eval"), seed), x),
            "batchnorm2d.eval.gamma": (lambda t: weighted_sum(batchnorm2d(x, t, beta, state, mode="eval"), seed), gamma),
        }
        for name, (f, at) in cases.items():
            err = grad_check(f, at)
            assert err < 1e-6, f"{name} seed {seed}: {err}"


def test_backward_is_bit_identical_on_repeat():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(2, 2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    up = rng.normal(size=(3, 2, 2, 2))

    def gradients():
        xt = Tensor(x.copy(), requires_grad=True)
        wt = Tensor(w.copy(), requires_grad=True)
        with Graph() as g:
            h = relu(batchnorm2d(conv2d(xt, wt, padding=1), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                                 BatchNormState.fresh(3)))
            pooled, _ = maxpool2d(h)
            loss = sum_all(sigmoid(conv_transpose2d(pooled, Tensor(up))))
        backward(g, loss)
        return xt.grad.copy(), wt.grad.copy()

    first, second = gradients(), gradients()
    assert np.array_equal(first[0], second[0])
    assert np.array_equal(first[1], second[1])


def run_all_tests():
    print("=" * 60)
    print("🧮 Tensor Engine Tests")
    print("=" * 60)

    tests = [(name, fn) for name, fn in globals().items() if name.startswith("test_") and callable(fn)]
    failed = []
    for name, fn in tests:
        try:
            fn()
            print(f"   ✅ PASS: {name}")
        except Exception as e:
            print(f"   ❌ FAIL: {name}: {e!r}")
            failed.append(name)

    print(f"\n   Passed: {len(tests) - len(failed)}")
    print(f"   Failed: {len(failed)}")
    return not failed


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
