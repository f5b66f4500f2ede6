import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdplstm.numerics import make_rng
from sdplstm.recurrent import (
    LstmParams,
    RnnParams,
    draw_cell_masks,
    lstm_backward,
    lstm_forward,
    lstm_step,
    max_pool,
    max_pool_backward,
    param_arrays,
    rnn_backward,
    rnn_forward,
)


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def random_lstm(rng, d, h, scale=0.8):
    return LstmParams(rng.uniform(-scale, scale, (4 * h, d)), rng.uniform(-scale, scale, (4 * h, h)), rng.uniform(-scale, scale, 4 * h))


def random_rnn(rng, d, h, scale=0.8):
    return RnnParams(rng.uniform(-scale, scale, (h, d)), rng.uniform(-scale, scale, (h, h)), rng.uniform(-scale, scale, h))


def test_zero_params_step():
    p = LstmParams.zeros(2, 3)
    h, c, _ = lstm_step(p, [1.0, -1.0], np.zeros(3), np.zeros(3))
    assert np.array_equal(h, np.zeros(3)) and np.array_equal(c, np.zeros(3))
    hs, _ = lstm_forward(p, np.ones((4, 2)))
    assert np.array_equal(hs, np.zeros((4, 3)))


def test_forget_gate_alone():
    # only b_f = 1 nonzero, c_prev = 1 -> c = sigma(1)
    p = LstmParams.zeros(2, 3)
    p.b_f[:] = 1.0
    _, c, tape = lstm_step(p, [0.0, 0.0], np.zeros(3), np.ones(3))
    assert np.allclose(c, sig(1.0), rtol=0, atol=1e-15)
    assert abs(c[0] - 0.7310585786300049) < 1e-15
    assert np.allclose(tape.i, 0.5) and np.allclose(tape.g, 0.0)


def test_scalar_lstm_oracle():
    p = LstmParams(np.array([[0.3], [-0.2], [0.5], [0.7]]), np.array([[0.1], [0.4], [-0.3], [0.2]]), np.array([0.05, -0.1, 0.2, 0.0]))
    xs = [0.9, -1.2, 0.4]
    h = c = 0.0
    expected = []
    for x in xs:
        zi, zf, zo, zg = (p.W[k, 0] * x + p.U[k, 0] * h + p.b[k] for k in range(4))
        c = sig(zi) * math.tanh(zg) + sig(zf) * c
        h = sig(zo) * math.tanh(c)
        expected.append(h)
    hs, _ = lstm_forward(p, np.array(xs)[:, None])
    assert np.allclose(hs[:, 0], expected, rtol=0, atol=1e-15)


def test_forward_is_chained_steps():
    rng = np.random.default_rng(0)
    p = random_lstm(rng, 4, 5)
    xs = rng.normal(size=(3, 4))
    hs, _ = lstm_forward(p, xs)
    h, c = np.zeros(5), np.zeros(5)
    for t in range(3):
        h, c, _ = lstm_step(p, xs[t], h, c)
        assert np.array_equal(hs[t], h)
    one, _ = lstm_forward(p, xs[:1])
    assert np.array_equal(one[0], lstm_step(p, xs[0], np.zeros(5), np.zeros(5))[0])


def test_shape_errors():
    p = LstmParams.zeros(2, 3)
    with pytest.raises(ValueError, match="input"):
        lstm_step(p, [1.0], np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError, match="hidden"):
        lstm_step(p, [1.0, 2.0], np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        lstm_forward(p, np.ones((2, 5)))
    with pytest.raises(ValueError):
        LstmParams(np.zeros((7, 2)), np.zeros((7, 1)), np.zeros(7))


def test_gate_views_alias_stacked_arrays():
    p = LstmParams.zeros(2, 3)
    p.W_o[1, 0] = 9.0
    assert p.W[7, 0] == 9.0 and p.U_g.shape == (3, 3) and p.b_i.shape == (3,)


def numeric_grads(run, arrays, h=1e-6):
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            keep = a[idx]
            a[idx] = keep + h
            up = run()
            a[idx] = keep - h
            down = run()
            a[idx] = keep
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("with_masks", [False, True], ids=["plain", "frozen-masks"])
def test_lstm_backward_matches_finite_differences(with_masks):
    rng = np.random.default_rng(1)
    p = random_lstm(rng, 2, 3)
    xs = rng.normal(size=(4, 2))
    R = rng.normal(size=(4, 3))
    masks = None
    if with_masks:
        mrng = make_rng(2)
        masks = [draw_cell_masks(3, ("i", "g", "o", "c", "h"), 0.1, mrng) for _ in range(4)]

    def loss():
        hs, _ = lstm_forward(p, xs, masks=masks)
        return float(np.sum(hs * R))

    _, tape = lstm_forward(p, xs, masks=masks)
    grads, dx = lstm_backward(p, tape, R)
    numeric = numeric_grads(loss, [p.W, p.U, p.b, xs])
    for analytic, num in zip([grads.W, grads.U, grads.b, dx], numeric):
        assert np.allclose(analytic, num, rtol=1e-6, atol=1e-8)


def test_rnn_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = random_rnn(rng, 2, 3)
    xs = rng.normal(size=(4, 2))
    R = rng.normal(size=(4, 3))

    def loss():
        return float(np.sum(rnn_forward(p, xs)[0] * R))

    _, tape = rnn_forward(p, xs)
    grads, dx = rnn_backward(p, tape, R)
    for analytic, num in zip([grads.W_in, grads.W_rec, grads.b_h, dx], numeric_grads(loss, [p.W_in, p.W_rec, p.b_h, xs])):
        assert np.allclose(analytic, num, rtol=1e-6, atol=1e-8)


def test_backward_of_empty_sequence():
    p = LstmParams.zeros(2, 3)
    _, tape = lstm_forward(p, np.zeros((0, 2)))
    grads, dx = lstm_backward(p, tape, np.zeros((0, 3)))
    assert dx.shape == (0, 2)
    assert all(not a.any() for _, a in param_arrays(grads))


def test_lazy_factors_match_dense_gradients():
    rng = np.random.default_rng(4)
    p = random_lstm(rng, 3, 2)
    xs = rng.normal(size=(5, 3))
    _, tape = lstm_forward(p, xs)
    R = rng.normal(size=(5, 2))
    dense, dx = lstm_backward(p, tape, R)
    lazy, dx_lazy = lstm_backward(p, tape, R, lazy=True)
    assert np.array_equal(dx, dx_lazy) and np.array_equal(dense.b, lazy.b)
    assert np.array_equal(lazy.W.dense(), dense.W) and np.array_equal(lazy.U.dense(), dense.U)
    assert np.allclose(lazy.W.a.T @ lazy.W.b, dense.W, rtol=1e-14, atol=0)


def test_forced_full_mask_zeroes_output():
    rng = np.random.default_rng(5)
    p = random_lstm(rng, 2, 3)
    zero = [{"h": np.zeros(3)} for _ in range(3)]
    hs, _ = lstm_forward(p, rng.normal(size=(3, 2)), masks=zero)
    assert np.array_equal(hs, np.zeros((3, 3)))


def test_rate_zero_matches_plain():
    rng = np.random.default_rng(6)
    p = random_lstm(rng, 2, 3)
    xs = rng.normal(size=(3, 2))
    assert np.array_equal(lstm_forward(p, xs)[0], lstm_forward(p, xs, rate=0.0, modes=("h", "c"), rng=make_rng(0))[0])


def test_dropout_masks_are_reproducible():
    rng = np.random.default_rng(7)
    p = random_lstm(rng, 2, 3)
    xs = rng.normal(size=(6, 2))
    a, _ = lstm_forward(p, xs, 0.3, ("i", "h"), make_rng(9))
    b, _ = lstm_forward(p, xs, 0.3, ("i", "h"), make_rng(9))
    assert np.array_equal(a, b)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0), st.integers(1, 12))
def test_gates_stay_in_range(seed, scale, length):
    rng = np.random.default_rng(seed)
    p = random_lstm(rng, 3, 4, scale)
    _, tape = lstm_forward(p, rng.normal(scale=scale, size=(length, 3)))
    for s in tape:
        for gate in (s.i, s.f, s.o):
            assert np.all((gate >= 0) & (gate <= 1))
        assert np.all(np.abs(s.g) <= 1) and np.all(np.abs(s.h) <= 1)
        assert np.all(np.isfinite(s.c))


def test_rnn_examples():
    p = RnnParams.zeros(2, 3)
    assert np.array_equal(rnn_forward(p, np.ones((3, 2)))[0], np.zeros((3, 3)))
    rng = np.random.default_rng(8)
    q = random_rnn(rng, 2, 3)
    x = rng.normal(size=2)
    assert np.allclose(rnn_forward(q, x[None])[0][0], np.tanh(q.W_in @ x + q.b_h), rtol=0, atol=1e-15)
    s = RnnParams(np.array([[0.5]]), np.array([[-0.8]]), np.array([0.1]))
    h, expected = 0.0, []
    for x in (1.0, 2.0, -0.5):
        h = math.tanh(0.5 * x - 0.8 * h + 0.1)
        expected.append(h)
    assert np.allclose(rnn_forward(s, np.array([[1.0], [2.0], [-0.5]]))[0][:, 0], expected, rtol=0, atol=1e-15)


def test_max_pool_examples():
    v, arg = max_pool([[0.5, -2.0]], 2)
    assert np.array_equal(v, [0.5, -2.0]) and arg.tolist() == [0, 0]
    v, arg = max_pool([[1.0, -1.0], [-1.0, 1.0]], 2)
    assert np.array_equal(v, [1.0, 1.0]) and arg.tolist() == [0, 1]
    v, arg = max_pool(np.zeros((0, 3)), 3)
    assert np.array_equal(v, np.zeros(3)) and arg.size == 0
    back = max_pool_backward([5.0, 7.0], np.array([0, 1]), 2)
    assert np.array_equal(back, [[5.0, 0.0], [0.0, 7.0]])
    assert max_pool_backward([1.0], np.zeros(0, dtype=int), 0).shape == (0, 1)
