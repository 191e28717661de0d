"""Minimal conv-net building blocks with explicit forward/backward passes.

Just enough machinery for the toy objectness detector: conv layers over
NHWC float64 tensors, leaky ReLU, sigmoid, and an Adam optimizer. The
heavy lifting lives in the compiled kernels.
"""

import numpy as np

from . import _kernels


class Conv2d:
    def __init__(self, cin, cout, k=3, stride=1, pad=1, rng=None):
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / (k * k * cin))
        self.w = rng.normal(0.0, scale, size=(k, k, cin, cout))
        self.b = np.zeros(cout)
        self.k = k
        self.stride = stride
        self.pad = pad

    def forward(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = _kernels.conv2d_forward(x, self.w, self.b, self.stride, self.pad)
        return y, x

    def backward(self, x, gy):
        gy = np.ascontiguousarray(gy, dtype=np.float64)
        gx = _kernels.conv2d_backward_input(gy, self.w, self.stride, self.pad,
                                            x.shape[1], x.shape[2])
        gw, gb = _kernels.conv2d_backward_weights(x, gy, self.stride, self.pad,
                                                  self.k, self.k)
        return gx, gw, gb

    def params(self):
        return [self.w, self.b]

    def set_params(self, w, b):
        self.w = np.array(w, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)


def leaky_relu(x, slope=0.1):
    y = np.where(x > 0, x, slope * x)
    return y, (x > 0)


def leaky_relu_backward(mask, gy, slope=0.1):
    return np.where(mask, gy, slope * gy)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, gy):
    return gy * y * (1.0 - y)


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
