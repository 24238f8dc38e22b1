"""Forward and backward kernels for each layer kind.

Spatial activations are (channels, height, width) arrays for a single
sample; sequence activations are (T, features).  Every ``*_forward`` returns
``(output, cache)`` and the matching ``*_backward`` takes ``(dout, cache)``.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --- convolution -----------------------------------------------------------


def conv_forward(x, W, b, stride, padding):
    C, H, Wd = x.shape
    O, _, kh, kw = W.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (Wd + 2 * pw - kw) // sw + 1
    cols = np.empty((C, kh, kw, Ho, Wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw]
    cols = cols.reshape(C * kh * kw, Ho * Wo)
    y = (W.reshape(O, -1) @ cols + b[:, None]).reshape(O, Ho, Wo)
    return y, (cols, x.shape, W, stride, padding)


def conv_backward(dy, cache, need_dx=True):
    cols, xshape, W, (sh, sw), (ph, pw) = cache
    O, C, kh, kw = W.shape
    _, Ho, Wo = dy.shape
    dy2 = dy.reshape(O, -1)
    dW = (dy2 @ cols.T).reshape(W.shape)
    db = dy2.sum(axis=1)
    if not need_dx:
        return None, dW, db
    dcols = (W.reshape(O, -1).T @ dy2).reshape(C, kh, kw, Ho, Wo)
    _, H, Wd = xshape
    dxp = np.zeros((C, H + 2 * ph, Wd + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += dcols[:, i, j]
    return dxp[:, ph:ph + H, pw:pw + Wd], dW, db


# --- max pooling -----------------------------------------------------------


def pool_forward(x, kernel, stride):
    C, H, W = x.shape
    (kh, kw), (sh, sw) = kernel, stride
    Ho, Wo = (H - kh) // sh + 1, (W - kw) // sw + 1
    if (kh, kw) == (sh, sw):
        win = x[:, :Ho * kh, :Wo * kw].reshape(C, Ho, kh, Wo, kw).transpose(2, 4, 0, 1, 3)
        win = win.reshape(kh * kw, C, Ho, Wo)
    else:
        win = np.stack([x[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw]
                        for i in range(kh) for j in range(kw)])
    arg = win.argmax(axis=0)
    y = np.take_along_axis(win, arg[None], axis=0)[0]
    return y, (arg, x.shape, kernel, stride)


def pool_backward(dy, cache):
    arg, xshape, (kh, kw), (sh, sw) = cache
    C, Ho, Wo = dy.shape
    dx = np.zeros(xshape)
    for idx in range(kh * kw):
        i, j = divmod(idx, kw)
        dx[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += np.where(arg == idx, dy, 0.0)
    return dx


# --- batch normalization ---------------------------------------------------


def batchnorm_forward(x, gamma, beta, state, train):
    """Per-channel normalization over the spatial positions of one sample.

    In train mode the running statistics in ``state`` are updated in place.
    """
    axes = (1, 2)
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state["running_mean"] *= 1 - BN_MOMENTUM
        state["running_mean"] += BN_MOMENTUM * mean
        state["running_var"] *= 1 - BN_MOMENTUM
        state["running_var"] += BN_MOMENTUM * var
    else:
        mean, var = state["running_mean"], state["running_var"]
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    y = gamma[:, None, None] * xhat + beta[:, None, None]
    return y, (xhat, inv_std, gamma, train)


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dy * xhat).sum(axis=(1, 2))
    dbeta = dy.sum(axis=(1, 2))
    dxhat = dy * gamma[:, None, None]
    if not train:
        return dxhat * inv_std[:, None, None], dgamma, dbeta
    m = xhat.shape[1] * xhat.shape[2]
    dx = (inv_std[:, None, None] / m) * (
        m * dxhat
        - dxhat.sum(axis=(1, 2))[:, None, None]
        - xhat * (dxhat * xhat).sum(axis=(1, 2))[:, None, None]
    )
    return dx, dgamma, dbeta


# --- LSTM ------------------------------------------------------------------
# Gate rows of W are ordered (input, forget, output, candidate); W acts on
# the concatenation [x_t, h_{t-1}].


def lstm_forward(x, W, b):
    T, D = x.shape
    H = W.shape[0] // 4
    Wx, Wh = W[:, :D], W[:, D:]
    zx = x @ Wx.T + b
    h = np.zeros((T + 1, H))
    c = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    for t in range(T):
        z = zx[t] + Wh @ h[t]
        g = np.empty_like(z)
        g[:3 * H] = sigmoid(z[:3 * H])
        g[3 * H:] = np.tanh(z[3 * H:])
        gates[t] = g
        c[t + 1] = g[H:2 * H] * c[t] + g[:H] * g[3 * H:]
        h[t + 1] = g[2 * H:3 * H] * np.tanh(c[t + 1])
    return h[1:], (x, W, h, c, gates)


def lstm_backward(dh_out, cache):
    x, W, h, c, gates = cache
    T, D = x.shape
    H = W.shape[0] // 4
    Wh = W[:, D:]
    dz = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in reversed(range(T)):
        g = gates[t]
        i, f, o, cand = g[:H], g[H:2 * H], g[2 * H:3 * H], g[3 * H:]
        tc = np.tanh(c[t + 1])
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        dzt = dz[t]
        dzt[:H] = dc * cand * i * (1 - i)
        dzt[H:2 * H] = dc * c[t] * f * (1 - f)
        dzt[2 * H:3 * H] = dh * tc * o * (1 - o)
        dzt[3 * H:] = dc * i * (1 - cand * cand)
        dh_next = Wh.T @ dzt
        dc_next = dc * f
    dW = np.concatenate([dz.T @ x, dz.T @ h[:-1]], axis=1)
    db = dz.sum(axis=0)
    dx = dz @ W[:, :D]
    return dx, dW, db


def blstm_forward(x, Wf, bf, Wb, bb):
    hf, cf = lstm_forward(x, Wf, bf)
    hb, cb = lstm_forward(x[::-1], Wb, bb)
    return np.concatenate([hf, hb[::-1]], axis=1), (cf, cb)


def blstm_backward(dy, cache):
    cf, cb = cache
    H = dy.shape[1] // 2
    dxf, dWf, dbf = lstm_backward(dy[:, :H], cf)
    dxb, dWb, dbb = lstm_backward(dy[::-1, H:], cb)
    return dxf + dxb[::-1], dWf, dbf, dWb, dbb


# --- dense / softmax -------------------------------------------------------


def dense_forward(x, W, b):
    return x @ W.T + b, x


def dense_backward(dy, x, W):
    return dy @ W, dy.T @ x, dy.sum(axis=0)


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dy, y):
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))
