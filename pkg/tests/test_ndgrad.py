import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from fingermotion.errors import ContractError, ShapeError, TrainingError
from fingermotion.ndgrad import (
    AdamState, Tensor, adam_step, affine, concat, dropout, gradient_check, lstm_cell,
    lstm_sequence, matmul, mean, mse, mul, sigmoid, split, tanh, tsum,
)


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


# -- forward ----------------------------------------------------------------------

def test_affine_identity():
    out = affine(Tensor([1.0, 2.0, 3.0]), np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])


def test_tanh_of_zero():
    assert tanh(Tensor(0.0)).data == 0.0


def test_lstm_zero_weights_give_zero_hidden(rng):
    x = rng.normal(size=(3, 7, 2))
    h = lstm_sequence(x, np.zeros((2, 16)), np.zeros((4, 16)), np.zeros(16))
    np.testing.assert_array_equal(h.data, 0.0)


def test_lstm_empty_sequence_is_rejected():
    with pytest.raises(ContractError):
        lstm_sequence(np.zeros((2, 0, 1)), np.zeros((1, 8)), np.zeros((2, 8)), np.zeros(8))


def test_lstm_one_step_equals_cell(rng):
    x = rng.normal(size=(4, 1, 3))
    wi, wh, b = rng.normal(size=(3, 20)), rng.normal(size=(5, 20)), rng.normal(size=20)
    h_seq = lstm_sequence(x, wi, wh, b).data[:, 0]
    h_cell, _ = lstm_cell(x[:, 0], np.zeros((4, 5)), np.zeros((4, 5)), wi, wh, b)
    np.testing.assert_allclose(h_seq, h_cell, rtol=0, atol=1e-15)


def _straight_line_lstm(x, wi, wh, b):
    """Step-by-step reference written without the library's gate helpers."""
    n, T, _ = x.shape
    H = wh.shape[0]
    h, c = np.zeros((n, H)), np.zeros((n, H))
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    out = np.zeros((n, T, H))
    for k in range(T):
        z = x[:, k] @ wi + h @ wh + b
        i, f, o, g = sig(z[:, :H]), sig(z[:, H:2 * H]), sig(z[:, 2 * H:3 * H]), np.tanh(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[:, k] = h
    return out


@pytest.mark.parametrize("seed", range(5))
def test_lstm_matches_straight_line_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 9, 2))
    wi, wh, b = rng.normal(size=(2, 24)), rng.normal(size=(6, 24)) * 0.5, rng.normal(size=24)
    got = lstm_sequence(x, wi, wh, b).data
    assert np.max(np.abs(got - _straight_line_lstm(x, wi, wh, b))) < 1e-12


def test_lstm_channel_batch_matches_per_channel(rng):
    C = 3
    x = rng.normal(size=(C, 4, 6, 1))
    wi, wh, b = rng.normal(size=(C, 1, 8)), rng.normal(size=(C, 2, 8)), rng.normal(size=(C, 1, 8))
    batched = lstm_sequence(x, wi, wh, b).data
    for c in range(C):
        ref = _straight_line_lstm(x[c], wi[c], wh[c], b[c, 0])
        np.testing.assert_allclose(batched[c], ref, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


# -- backward ---------------------------------------------------------------------

def test_square_gradient():
    x = leaf(3.0)
    mul(x, x).backward()
    assert x.grad == 6.0


def test_mse_gradient_two_samples():
    w = leaf(1.0)
    loss = mse(mul(w, np.array([1.0, 1.0])), np.array([0.0, 0.0]))
    loss.backward()
    assert w.grad == pytest.approx(2.0)


def test_unused_parameter_gets_zero_gradient():
    a, b = leaf(2.0), leaf(5.0)
    loss = mul(a, a)
    loss.backward()
    assert b.grad is None or b.grad == 0.0


def test_fan_out_accumulates():
    x = leaf(2.0)
    y = mul(x, 3.0)
    (y + y + mul(x, x)).backward()
    assert x.grad == pytest.approx(3.0 + 3.0 + 4.0)


def test_backward_requires_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(ContractError):
        mul(x, 2.0).backward()


def _check(fn, params, tol=1e-6):
    assert gradient_check(fn, params) < tol


def test_gradcheck_quadratic_bowl(rng):
    A = rng.normal(size=(4, 4))
    A = A @ A.T + np.eye(4)
    x0 = rng.normal(size=4)
    err = gradient_check(lambda p: tsum(mul(p["x"], matmul(A, p["x"]))), {"x": x0})
    assert err < 1e-9


@pytest.mark.parametrize("op", ["tanh", "sigmoid", "affine", "concat", "mean", "lstm"])
def test_layer_gradients(op, rng):
    r = rng.normal(size=(3, 4))
    if op == "tanh":
        fn, p = lambda p: tsum(mul(tanh(p["x"]), r)), {"x": rng.normal(size=(3, 4))}
    elif op == "sigmoid":
        fn, p = lambda p: tsum(mul(sigmoid(p["x"]), r)), {"x": rng.normal(size=(3, 4))}
    elif op == "affine":
        fn = lambda p: tsum(mul(tanh(affine(p["x"], p["w"], p["b"])), r))
        p = {"x": rng.normal(size=(3, 2)), "w": rng.normal(size=(2, 4)), "b": rng.normal(size=4)}
    elif op == "concat":
        fn = lambda p: tsum(mul(concat([p["a"], p["b"]], axis=1), r))
        p = {"a": rng.normal(size=(3, 1)), "b": rng.normal(size=(3, 3))}
    elif op == "mean":
        fn, p = lambda p: mean(mul(p["x"], p["x"])), {"x": rng.normal(size=(3, 4))}
    else:
        rr = rng.normal(size=(2, 5, 3))
        fn = lambda p: tsum(mul(lstm_sequence(p["x"], p["wi"], p["wh"], p["b"]), rr))
        p = {"x": rng.normal(size=(2, 5, 2)), "wi": rng.normal(size=(2, 12)),
             "wh": rng.normal(size=(3, 12)), "b": rng.normal(size=12)}
    _check(fn, p)


def test_gradcheck_is_deterministic(rng):
    p = {"x": rng.normal(size=(5,)), "w": rng.normal(size=(5, 2))}
    fn = lambda q: tsum(tanh(matmul(q["x"], q["w"])))
    assert gradient_check(fn, p) == gradient_check(fn, p)


# -- dropout, concat/split --------------------------------------------------------

def test_dropout_inference_is_identity(rng):
    x = rng.normal(size=(10, 10))
    np.testing.assert_array_equal(dropout(Tensor(x), 0.3, rng, training=False).data, x)


def test_dropout_rate_and_rescaling():
    x = np.ones(200_000)
    out = dropout(Tensor(x), 0.3, np.random.default_rng(0), training=True).data
    kept = out != 0
    assert abs(1.0 - kept.mean() - 0.3) < 0.005
    np.testing.assert_allclose(out[kept], 1.0 / 0.7)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)),
                  elements=st.floats(-1e3, 1e3)),
       hnp.arrays(np.float64, st.tuples(st.just(1), st.integers(1, 5)),
                  elements=st.floats(-1e3, 1e3)))
def test_concat_then_split_recovers_operands(a, b):
    b = np.broadcast_to(b, (a.shape[0], b.shape[1])).copy()
    joined = concat([Tensor(a), Tensor(b)], axis=1)
    pa, pb = split(joined, [a.shape[1], b.shape[1]], axis=1)
    np.testing.assert_array_equal(pa.data, a)
    np.testing.assert_array_equal(pb.data, b)


# -- Adam -------------------------------------------------------------------------

def test_adam_zero_gradient_leaves_everything():
    p = {"w": np.array([1.5, -2.0])}
    s = AdamState()
    adam_step(p, {"w": np.zeros(2)}, s)
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])
    np.testing.assert_array_equal(s.m["w"], 0.0)
    np.testing.assert_array_equal(s.v["w"], 0.0)
    assert s.step == 1


def test_adam_first_step_magnitude():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState(lr=1e-3))
    assert p["w"][0] == pytest.approx(-1e-3 / (1.0 + 1e-8), rel=1e-12)


def test_adam_is_stateful():
    p = {"w": np.array([0.0])}
    s = AdamState()
    adam_step(p, {"w": np.array([1.0])}, s)
    first = -p["w"][0]
    before = p["w"][0]
    adam_step(p, {"w": np.array([0.5])}, s)
    assert before - p["w"][0] != pytest.approx(first, rel=1e-9)
    assert s.step == 2


def test_adam_non_finite_gradient_names_parameter():
    p = {"a": np.zeros(2), "b": np.zeros(2)}
    s = AdamState()
    with pytest.raises(TrainingError, match="'b'"):
        adam_step(p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, s)
    np.testing.assert_array_equal(p["a"], 0.0)
    assert s.step == 0
