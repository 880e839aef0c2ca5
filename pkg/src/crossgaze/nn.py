"""Minimal float64 tensor helpers and neural-net layers with explicit backward passes.

Arrays are plain numpy ndarrays in row-major float64. Each layer caches what its
forward pass needs and exposes ``backward(dout)`` returning the gradient with
respect to its input while accumulating parameter gradients in place. The model
graph is fixed, so there is no general-purpose tape.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError, StateError


def tensor(data) -> np.ndarray:
    """Row-major float64 array."""
    return np.ascontiguousarray(data, dtype=np.float64)


def assert_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in tensor '{name}'")


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def softplus(x):
    """log(1 + e^x) without overflow."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# Small positive bias keeps rectified units alive at init and keeps
# pre-activations off the exact ReLU kink, where one-sided finite
# differences and the subgradient convention disagree.
BIAS_INIT = 0.01


class Param:
    """A trainable array together with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        self.name = name
        self.value = tensor(value)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class Dense:
    """Affine map y = x @ W + b over a batch of row vectors."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.name = name
        self.w = Param(name + ".w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        self.b = Param(name + ".b", np.full(n_out, BIAS_INIT))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.w.value.shape[0]:
            raise ShapeError(
                f"{self.name}: input {x.shape} does not match weights "
                f"{self.w.value.shape} (expected [batch, {self.w.value.shape[0]}])"
            )
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise StateError(f"{self.name}: backward called before forward")
        self.w.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value.T

    def params(self):
        return [self.w, self.b]


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {hp}x{wp} "
            f"(input {h}x{w}, pad {pad})"
        )
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, xshape, kh, kw, stride, pad, oh, ow):
    b, c, h, w = xshape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    dc = dcols.reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dc[:, :, i, j]
    if pad:
        return dxp[:, :, pad:pad + h, pad:pad + w].copy()
    return dxp


class Conv2d:
    """Cross-correlation over [batch, channels, height, width] inputs."""

    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, pad=0, name="conv"):
        self.name = name
        self.stride = stride
        self.pad = pad
        self.kernel = kernel
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        self.w = Param(name + ".w", glorot_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, fan_out))
        self.b = Param(name + ".b", np.full(out_channels, BIAS_INIT))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        co, ci, kh, kw = self.w.value.shape
        if x.ndim != 4 or x.shape[1] != ci:
            raise ShapeError(f"{self.name}: input {x.shape} does not match kernel {self.w.value.shape}")
        cols, oh, ow = _im2col(x, kh, kw, self.stride, self.pad)
        out = cols @ self.w.value.reshape(co, -1).T + self.b.value
        self._cache = (cols, x.shape, oh, ow)
        return out.transpose(0, 2, 1).reshape(x.shape[0], co, oh, ow)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        cols, xshape, oh, ow = self._cache
        co, ci, kh, kw = self.w.value.shape
        dmat = dout.reshape(xshape[0], co, oh * ow).transpose(0, 2, 1)
        self.w.grad += np.einsum("bpo,bpk->ok", dmat, cols).reshape(self.w.value.shape)
        self.b.grad += dout.sum(axis=(0, 2, 3))
        dcols = dmat @ self.w.value.reshape(co, -1)
        return _col2im(dcols, xshape, kh, kw, self.stride, self.pad, oh, ow)

    def params(self):
        return [self.w, self.b]


class Relu:
    def __init__(self):
        self._mask = None
        self._x = None  # kept for kink-clearance diagnostics

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._mask = x > 0.0
        self._x = x
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        if self._mask is None:
            raise StateError("relu: backward called before forward")
        return np.where(self._mask, dout, 0.0)

    def params(self):
        return []


class Sigmoid:
    def __init__(self):
        self._out = None

    def forward(self, x):
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout):
        if self._out is None:
            raise StateError("sigmoid: backward called before forward")
        return dout * self._out * (1.0 - self._out)

    def params(self):
        return []


class Softmax:
    """Softmax over the last axis."""

    def __init__(self):
        self._out = None

    def forward(self, x):
        self._out = softmax(x, axis=-1)
        return self._out

    def backward(self, dout):
        if self._out is None:
            raise StateError("softmax: backward called before forward")
        y = self._out
        return y * (dout - np.sum(dout * y, axis=-1, keepdims=True))

    def params(self):
        return []


class MaxPool2x2:
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped."""

    def __init__(self):
        self._cache = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        b, c, h, w = x.shape
        oh, ow = h // 2, w // 2
        if oh < 1 or ow < 1:
            raise ShapeError(f"maxpool2x2: input {x.shape} smaller than the pooling window")
        r = x[:, :, :2 * oh, :2 * ow].reshape(b, c, oh, 2, ow, 2)
        r = r.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
        arg = np.argmax(r, axis=-1)
        out = np.take_along_axis(r, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, arg)
        return out

    def backward(self, dout):
        if self._cache is None:
            raise StateError("maxpool2x2: backward called before forward")
        xshape, arg = self._cache
        b, c, h, w = xshape
        oh, ow = h // 2, w // 2
        dr = np.zeros((b, c, oh, ow, 4))
        np.put_along_axis(dr, arg[..., None], dout[..., None], axis=-1)
        dx = np.zeros(xshape)
        dr = dr.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        dx[:, :, :2 * oh, :2 * ow] = dr.reshape(b, c, 2 * oh, 2 * ow)
        return dx

    def params(self):
        return []


_ACTIVATION_KINDS = ("relu", "sigmoid", "softmax", "maxpool2x2")


def activation_forward(x, kind: str) -> np.ndarray:
    """One-shot activation by name; see the layer classes for trainable use."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "softmax":
        return softmax(x, axis=-1)
    if kind == "maxpool2x2":
        return MaxPool2x2().forward(x)
    raise ConfigError(f"unknown activation kind {kind!r}; choose from {_ACTIVATION_KINDS}")


class Sequential:
    """A fixed chain of layers sharing the forward/backward protocol."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out


class SGD:
    """Gradient descent with momentum: v <- mu*v + g, p <- p - lr*v.

    Gradient accumulators are zeroed after every step.
    """

    def __init__(self, params, lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self._velocity):
            v *= self.momentum
            v += p.grad
            p.value -= self.lr * v
            p.zero_grad()


class Adam:
    """Adam with bias correction; gradients are zeroed after every step."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]
        self._t = 0

    def step(self):
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for p, m, v in zip(self.params, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.zero_grad()


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9):
    if kind == "sgd":
        return SGD(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr)
    raise ConfigError(f"unknown optimizer {kind!r}; choose 'sgd' or 'adam'")
