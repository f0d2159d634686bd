"""Layer primitives with explicit forward and backward passes.

Everything is float64 and operates on single samples: vectors ``(d,)`` for
dense stacks, sequences ``(T, d)`` for convolution and recurrence. Each
forward returns the output plus the cache its backward needs; backwards
return the input gradient and write parameter gradients into a dict keyed
like the parameter dict.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation_forward(kind: str, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if kind == "relu":
        out = np.maximum(x, 0.0)
        return out, x
    if kind == "tanh":
        out = np.tanh(x)
        return out, out
    raise ShapeError(f"unknown activation {kind!r}")


def activation_backward(kind: str, cache: np.ndarray, dout: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return dout * (cache > 0)
    return dout * (1.0 - cache * cache)


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """y = x @ W + b for a vector (d_in,) or rows (T, d_in)."""
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"dense layer expects width {W.shape[0]}, got {x.shape[-1]}")
    return x @ W + b, x


def dense_backward(
    W: np.ndarray, cache: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dW, db)."""
    x = cache
    if x.ndim == 1:
        dW = np.outer(x, dy)
        db = dy.copy()
    else:
        dW = x.T @ dy
        db = dy.sum(axis=0)
    return dy @ W.T, dW, db


def conv1d_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Valid 1-D convolution over the time axis.

    ``x`` is (T, d); filters ``W`` are (n_filters, kernel, d) and each output
    step sees ``kernel`` consecutive timesteps across all input dims. The
    sequence must be at least as long as the kernel.
    """
    n_filters, kernel, d = W.shape
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"conv layer expects (T, {d}) input, got {x.shape}")
    t = x.shape[0]
    if t < kernel:
        raise ShapeError(f"conv layer needs sequence length >= kernel {kernel}, got {t}")
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=0)  # (T', d, kernel)
    out = np.einsum("tdk,fkd->tf", windows, W) + b
    return out, x


def conv1d_backward(
    W: np.ndarray, cache: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dW, db) for the valid convolution above."""
    x = cache
    n_filters, kernel, d = W.shape
    t_out = dout.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=0)
    dW = np.einsum("tf,tdk->fkd", dout, windows)
    db = dout.sum(axis=0)
    dx = np.zeros_like(x)
    for k in range(kernel):
        dx[k:k + t_out] += dout @ W[:, k, :]
    return dx, dW, db


def global_max_pool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max over the time axis of (T, f); cache holds the argmax per feature."""
    idx = np.argmax(x, axis=0)
    return x[idx, np.arange(x.shape[1])], idx


def global_max_pool_backward(cache: np.ndarray, t: int, dout: np.ndarray) -> np.ndarray:
    dx = np.zeros((t, dout.shape[0]))
    dx[cache, np.arange(dout.shape[0])] = dout
    return dx


def lstm_forward(
    Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray, x: np.ndarray, reverse: bool = False
) -> tuple[np.ndarray, dict]:
    """One LSTM direction over a (T, d) sequence, zero initial state.

    Gate pre-activations stack as [input, forget, cell, output] along the
    first axis of the (4H, ...) weight matrices. Returns hidden states in
    input time order regardless of direction.
    """
    hidden = Wh.shape[1]
    if x.ndim != 2 or x.shape[1] != Wx.shape[1]:
        raise ShapeError(f"lstm expects (T, {Wx.shape[1]}) input, got {x.shape}")
    t_len = x.shape[0]
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    hs = np.zeros((t_len, hidden))
    cache = {
        "x": x,
        "order": list(order),
        "i": np.zeros((t_len, hidden)),
        "f": np.zeros((t_len, hidden)),
        "g": np.zeros((t_len, hidden)),
        "o": np.zeros((t_len, hidden)),
        "c": np.zeros((t_len, hidden)),
        "tanh_c": np.zeros((t_len, hidden)),
        "h_prev": np.zeros((t_len, hidden)),
        "c_prev": np.zeros((t_len, hidden)),
    }
    for step in cache["order"]:
        z = Wx @ x[step] + Wh @ h + b
        i = _sigmoid(z[:hidden])
        f = _sigmoid(z[hidden:2 * hidden])
        g = np.tanh(z[2 * hidden:3 * hidden])
        o = _sigmoid(z[3 * hidden:])
        cache["h_prev"][step] = h
        cache["c_prev"][step] = c
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        for name, val in (("i", i), ("f", f), ("g", g), ("o", o), ("c", c), ("tanh_c", tanh_c)):
            cache[name][step] = val
        hs[step] = h
    return hs, cache


def lstm_backward(
    Wx: np.ndarray, Wh: np.ndarray, cache: dict, dh_seq: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT given gradients on every hidden state; returns (dx, dWx, dWh, db)."""
    hidden = Wh.shape[1]
    x = cache["x"]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * hidden)
    dx = np.zeros_like(x)
    dh_carry = np.zeros(hidden)
    dc_carry = np.zeros(hidden)
    for step in reversed(cache["order"]):
        i, f, g, o = cache["i"][step], cache["f"][step], cache["g"][step], cache["o"][step]
        tanh_c = cache["tanh_c"][step]
        dh = dh_seq[step] + dh_carry
        dc = dc_carry + dh * o * (1.0 - tanh_c * tanh_c)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cache["c_prev"][step] * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tanh_c * o * (1.0 - o),
        ])
        dWx += np.outer(dz, x[step])
        dWh += np.outer(dz, cache["h_prev"][step])
        db += dz
        dx[step] += Wx.T @ dz
        dh_carry = Wh.T @ dz
        dc_carry = dc * f
    return dx, dWx, dWh, db
