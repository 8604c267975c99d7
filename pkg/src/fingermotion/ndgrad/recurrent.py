"""Gated recurrent (LSTM) cell unrolled over a sequence, as one graph node.

The unrolled loop is fused into a single op with a hand-written
backpropagation-through-time rule; building one graph node per gate per step
would dominate runtime at the model's sizes.

Shapes (leading ``...`` dims batch independent cells, e.g. one per channel)::

    x        (..., N, T, I)
    w_input  (..., I, 4H)     gate blocks ordered input, forget, output, candidate
    w_hidden (..., H, 4H)
    bias     (..., 1, 4H)
    returns  (..., N, T, H)
"""
import numpy as np

from ..errors import ContractError, ShapeError
from .tensor import Tensor, _sigmoid, _unbroadcast, as_tensor


def lstm_cell(x, h, c, w_input, w_hidden, bias):
    """One step on plain arrays; returns ``(h_new, c_new)``."""
    H = h.shape[-1]
    z = x @ w_input + h @ w_hidden + bias
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    o = _sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def lstm_sequence(x, w_input, w_hidden, bias):
    """Run the cell over ``T`` steps from zero state and return every hidden state."""
    x, w_input, w_hidden, bias = (as_tensor(t) for t in (x, w_input, w_hidden, bias))
    if x.ndim < 3:
        raise ShapeError(f"lstm_sequence: input must be (..., N, T, I), got {x.shape}")
    T = x.shape[-2]
    if T == 0:
        raise ContractError("lstm_sequence: empty sequence")
    H = w_hidden.shape[-2]
    if w_hidden.shape[-1] != 4 * H or w_input.shape[-1] != 4 * H:
        raise ShapeError(
            f"lstm_sequence: gate width mismatch, shapes {w_input.shape} and {w_hidden.shape}")
    if w_input.shape[-2] != x.shape[-1]:
        raise ShapeError(f"lstm_sequence: input width mismatch, shapes {x.shape} and {w_input.shape}")

    X, Wi, Wh, b = x.data, w_input.data, w_hidden.data, bias.data
    try:
        lead = np.broadcast_shapes(X.shape[:-2], Wi.shape[:-2] + (1,), Wh.shape[:-2] + (1,),
                                   b.shape[:-2] + (1,))
    except ValueError:
        raise ShapeError(
            f"lstm_sequence: batch dims disagree, shapes {x.shape} and {w_hidden.shape}") from None
    N = X.shape[-3]
    dt = np.result_type(X, Wi, Wh, b)
    S = 3 * H                                   # sigmoid block width

    # sigmoid(z) = (tanh(z/2) + 1)/2: halve the sigmoid columns once up front
    half = np.ones(4 * H, dtype=dt)
    half[:S] = 0.5
    Xt = np.moveaxis(X, -2, 0)                  # (T, ..., N, I), a view
    gates = np.empty((T,) + lead + (4 * H,), dtype=dt)
    gates[...] = np.matmul(Xt, Wi * half) + b * half
    Wh_half = Wh * half
    cells = np.empty((T,) + lead + (H,), dtype=dt)
    tcell = np.empty_like(cells)
    hs = np.empty_like(cells)
    h = np.zeros(lead + (H,), dtype=dt)
    c = np.zeros(lead + (H,), dtype=dt)
    for k in range(T):
        gk = gates[k]
        gk += h @ Wh_half
        np.tanh(gk, out=gk)
        sg = gk[..., :S]
        sg *= 0.5
        sg += 0.5
        ck = cells[k]
        np.multiply(gk[..., H:2 * H], c, out=ck)
        ck += gk[..., :H] * gk[..., S:]
        np.tanh(ck, out=tcell[k])
        np.multiply(gk[..., 2 * H:S], tcell[k], out=hs[k])
        c, h = ck, hs[k]

    def backward(gout):
        gout_t = np.moveaxis(gout, -2, 0)
        dz = np.empty_like(gates)
        dh_next = np.zeros(lead + (H,), dtype=dt)
        dc = np.zeros(lead + (H,), dtype=dt)
        WhT = np.swapaxes(Wh, -1, -2)
        for k in range(T - 1, -1, -1):
            gk = gates[k]
            i, f, o, g = gk[..., :H], gk[..., H:2 * H], gk[..., 2 * H:S], gk[..., S:]
            tc = tcell[k]
            dh = gout_t[k] + dh_next
            dzk = dz[k]
            np.multiply(dh, tc, out=dzk[..., 2 * H:S])            # d o
            dc += dh * o * (1.0 - tc * tc)
            np.multiply(dc, g, out=dzk[..., :H])                  # d i
            if k > 0:
                np.multiply(dc, cells[k - 1], out=dzk[..., H:2 * H])   # d f
            else:
                dzk[..., H:2 * H] = 0.0
            np.multiply(dc, i, out=dzk[..., S:])                  # d g
            dzk[..., S:] *= 1.0 - g * g
            sg = gk[..., :S]
            dzk[..., :S] *= sg * (1.0 - sg)
            dc *= f
            dh_next = dzk @ WhT
        # parameter gradients in one batched product over all (T, N) positions
        h_prev = np.concatenate([np.zeros((1,) + lead + (H,), dtype=dt), hs[:-1]], axis=0)
        dz_l = np.moveaxis(dz, 0, -2)                             # (..., N, T, 4H)
        hp_l = np.moveaxis(h_prev, 0, -2)
        flat = lead[:-1] + (N * T,)
        dzf = dz_l.reshape(flat + (4 * H,))
        dWh = np.swapaxes(hp_l.reshape(flat + (H,)), -1, -2) @ dzf
        Xf = np.broadcast_to(X, lead + X.shape[-2:]).reshape(flat + (X.shape[-1],))
        dWi = np.swapaxes(Xf, -1, -2) @ dzf
        db = dzf.sum(axis=-2, keepdims=True)
        dX = np.matmul(dz_l, np.expand_dims(np.swapaxes(Wi, -1, -2), -3))
        return (_unbroadcast(dX, X.shape), _unbroadcast(dWi, Wi.shape),
                _unbroadcast(dWh, Wh.shape), _unbroadcast(db, b.shape))

    return Tensor._make(np.moveaxis(hs, 0, -2), (x, w_input, w_hidden, bias), "lstm", backward)
