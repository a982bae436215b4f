"""Single-layer LSTM with independent categorical heads, in plain numpy.

Gate layout in ``W`` (shape ``(F + H, 4H)``) is ``[input, forget, output, cell]``.
Everything runs in float64 so finite-difference checks are meaningful.
"""
from __future__ import annotations

import numpy as np

PARAM_NAMES = ("W", "b", "Wo", "bo")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_params(n_in: int, hidden: int, n_out: int, rng: np.random.Generator) -> dict:
    s = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    return {
        "W": rng.uniform(-s, s, size=(n_in + hidden, 4 * hidden)),
        "b": b,
        "Wo": rng.uniform(-s, s, size=(hidden, n_out)),
        "bo": np.zeros(n_out),
    }


def n_params(n_in: int, hidden: int, n_out: int) -> int:
    return 4 * hidden * (n_in + hidden + 1) + hidden * n_out + n_out


def forward(params: dict, X: np.ndarray, drop_mask: np.ndarray | None = None):
    """Logits for a batch of sequences ``X`` of shape ``(B, T, F)``."""
    W, b = params["W"], params["b"]
    B, T, F = X.shape
    H = params["Wo"].shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(T):
        xh = np.concatenate([X[:, t, :], h], axis=1)
        z = xh @ W + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        steps.append((xh, i, f, o, g, c, tc))
        h, c = o * tc, c_new
    hd = h if drop_mask is None else h * drop_mask
    logits = hd @ params["Wo"] + params["bo"]
    return logits, (steps, hd, drop_mask)


def head_log_softmax(logits: np.ndarray, n_heads: int, n_classes: int) -> np.ndarray:
    L = logits.reshape(logits.shape[0], n_heads, n_classes)
    L = L - L.max(axis=2, keepdims=True)
    return L - np.log(np.exp(L).sum(axis=2, keepdims=True))


def loss(params, X, Y, n_classes, drop_mask=None) -> float:
    logits, _ = forward(params, X, drop_mask)
    logp = head_log_softmax(logits, Y.shape[1], n_classes)
    picked = np.take_along_axis(logp, Y[:, :, None], axis=2)[:, :, 0]
    return float(-picked.sum(axis=1).mean())


def loss_and_grad(params, X, Y, n_classes, drop_mask=None):
    """Mean over the batch of the cross-entropy summed across heads."""
    B, n_heads = Y.shape
    logits, (steps, hd, mask) = forward(params, X, drop_mask)
    logp = head_log_softmax(logits, n_heads, n_classes)
    picked = np.take_along_axis(logp, Y[:, :, None], axis=2)[:, :, 0]
    value = float(-picked.sum(axis=1).mean())

    dlog = np.exp(logp)
    np.put_along_axis(dlog, Y[:, :, None], np.take_along_axis(dlog, Y[:, :, None], axis=2) - 1.0, axis=2)
    dlog = dlog.reshape(B, -1) / B

    W = params["W"]
    H = params["Wo"].shape[0]
    F = W.shape[0] - H
    grads = {"Wo": hd.T @ dlog, "bo": dlog.sum(axis=0),
             "W": np.zeros_like(W), "b": np.zeros_like(params["b"])}
    dh = dlog @ params["Wo"].T
    if mask is not None:
        dh = dh * mask
    dc = np.zeros_like(dh)
    for xh, i, f, o, g, c_prev, tc in reversed(steps):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        grads["W"] += xh.T @ dz
        grads["b"] += dz.sum(axis=0)
        dh = (dz @ W.T)[:, F:]
        dc = dc * f
    return value, grads


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in params:
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
