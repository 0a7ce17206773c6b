"""Trainable layers with hand-written forward and backward passes.

Every layer follows the same small protocol::

    y = layer.forward(x, train=True)   # caches what backward needs
    bundle = layer.backward(grad_y)    # GradientBundle(params=..., input=...)

Parameters live in ``layer.params`` (name -> ndarray) and the matching
gradients of the most recent backward call in ``layer.grads``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError

NUM_CLASSES = 10


@dataclass
class GradientBundle:
    params: dict[str, np.ndarray] = field(default_factory=dict)
    input: np.ndarray | None = None


def he_init(fan_in: int, shape, rng: np.random.Generator, dtype=np.float64,
            distribution: str = "normal") -> np.ndarray:
    """He initialisation: zero mean, standard deviation sqrt(2 / fan_in).

    ``distribution="uniform"`` draws from U(-a, a) with a = sqrt(6 / fan_in),
    which has the same standard deviation.
    """
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    if distribution == "normal":
        w = rng.normal(0.0, std, size=shape)
    elif distribution == "uniform":
        a = np.sqrt(3.0) * std
        w = rng.uniform(-a, a, size=shape)
    else:
        raise ValueError(f"unknown init distribution {distribution!r}")
    return w.astype(dtype, copy=False)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]
    group: str | None = None

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> GradientBundle:
        raise NotImplementedError

    def _bundle(self, grad_in):
        return GradientBundle(params=dict(self.grads), input=grad_in)


class ConvLayer(Layer):
    """Stride-1 cross-correlation with zero padding and a per-filter bias."""

    group = "CL"

    def __init__(self, in_depth: int, out_depth: int, kernel: int, padding: int = 0,
                 rng: np.random.Generator | None = None, dtype=np.float64,
                 init: str = "normal"):
        super().__init__()
        if padding < 0:
            raise ValueError("padding must be nonnegative")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = kernel
        self.padding = padding
        fan_in = in_depth * kernel * kernel
        self.params["weight"] = he_init(fan_in, (out_depth, in_depth, kernel, kernel),
                                        rng, dtype, init)
        self.params["bias"] = np.zeros(out_depth, dtype=dtype)
        self._cache = None

    @property
    def in_depth(self) -> int:
        return self.params["weight"].shape[1]

    @property
    def out_depth(self) -> int:
        return self.params["weight"].shape[0]

    def output_extent(self, h: int, w: int) -> tuple[int, int]:
        k, p = self.kernel, self.padding
        return h + 2 * p - k + 1, w + 2 * p - k + 1

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        if c != self.in_depth:
            raise ShapeError(f"conv expects {self.in_depth} input channels, got {c}")
        oh, ow = self.output_extent(h, w)
        if oh < 1 or ow < 1:
            raise ShapeError(f"input {h}x{w} too small for kernel {self.kernel} "
                             f"with padding {self.padding}")
        p, k = self.padding, self.kernel
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        # im2col: rows are output positions, columns are (c, ki, kj)
        cols = sliding_window_view(xp, (k, k), axis=(2, 3))
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
        wmat = self.params["weight"].reshape(self.out_depth, -1)
        out = cols @ wmat.T + self.params["bias"]
        self._cache = (x.shape, cols)
        return np.ascontiguousarray(out.reshape(n, oh, ow, self.out_depth).transpose(0, 3, 1, 2))

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        (n, c, h, w), cols = self._cache
        oh, ow = self.output_extent(h, w)
        if grad_out.shape != (n, self.out_depth, oh, ow):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match "
                             f"forward output {(n, self.out_depth, oh, ow)}")
        k, p = self.kernel, self.padding
        g = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_depth)
        wmat = self.params["weight"].reshape(self.out_depth, -1)
        self.grads["weight"] = (g.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] = g.sum(axis=0)
        dcols = (g @ wmat).reshape(n, oh, ow, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        return self._bundle(np.ascontiguousarray(dx))


class FcLayer(Layer):
    """Affine map ``y = x @ W.T + b`` with W shaped (out_units, in_units)."""

    group = "FC"

    def __init__(self, in_units: int, out_units: int, rng: np.random.Generator | None = None,
                 dtype=np.float64, init: str = "normal"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_init(in_units, (out_units, in_units), rng, dtype, init)
        self.params["bias"] = np.zeros(out_units, dtype=dtype)
        self._x = None

    @property
    def in_units(self) -> int:
        return self.params["weight"].shape[1]

    def forward(self, x, train=True):
        if x.ndim != 2 or x.shape[1] != self.in_units:
            raise ShapeError(f"fc expects (n, {self.in_units}) input, got {x.shape}")
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("backward called before forward")
        if grad_out.shape != (self._x.shape[0], self.params["weight"].shape[0]):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output")
        self.grads["weight"] = grad_out.T @ self._x
        self.grads["bias"] = grad_out.sum(axis=0)
        return self._bundle(grad_out @ self.params["weight"])


class BatchNormLayer(Layer):
    """Per-channel batch normalisation over (batch, row, col)."""

    group = "CL"

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float64):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x, train=True):
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if not train:
            xhat = ((x - self.running_mean[None, :, None, None])
                    / np.sqrt(self.running_var[None, :, None, None] + self.eps))
            return gamma * xhat + beta
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise ShapeError("batch norm in train mode needs batch*h*w >= 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        mom = self.momentum
        self.running_mean = (1 - mom) * self.running_mean + mom * mean
        # running variance tracks the unbiased estimate
        self.running_var = (1 - mom) * self.running_var + mom * var * m / (m - 1)
        self._cache = (xhat, inv_std)
        return gamma * xhat + beta

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward needs a preceding train-mode forward")
        xhat, inv_std = self._cache
        if grad_out.shape != xhat.shape:
            raise ShapeError("grad_out shape does not match forward output")
        m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
        self.grads["gamma"] = (grad_out * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = grad_out.sum(axis=(0, 2, 3))
        dxhat = grad_out * self.params["gamma"][None, :, None, None]
        dx = (inv_std[None, :, None, None] / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        )
        return self._bundle(dx)


class ReluLayer(Layer):
    def forward(self, x, train=True):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad_out):
        return self._bundle(grad_out * self._mask)


class LinearActivation(Layer):
    def forward(self, x, train=True):
        return x

    def backward(self, grad_out):
        return self._bundle(grad_out)


class FlattenLayer(Layer):
    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return self._bundle(grad_out.reshape(self._shape))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k - 1}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / n


# Functional spellings of the layer protocol.

def conv_forward(layer: ConvLayer, x):
    return layer.forward(x)


def conv_backward(layer: ConvLayer, x, grad_out) -> GradientBundle:
    layer.forward(x)
    return layer.backward(grad_out)


def fc_forward(layer: FcLayer, x):
    return layer.forward(x)


def fc_backward(layer: FcLayer, x, grad_out) -> GradientBundle:
    layer.forward(x)
    return layer.backward(grad_out)


def batchnorm_forward(layer: BatchNormLayer, x, mode: str = "train"):
    return layer.forward(x, train=(mode == "train"))


def batchnorm_backward(layer: BatchNormLayer, x, grad_out) -> GradientBundle:
    layer.forward(x, train=True)
    return layer.backward(grad_out)
