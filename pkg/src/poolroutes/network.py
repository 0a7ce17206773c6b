"""Declarative architecture specs compiled into executable layer sequences."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .layers import (NUM_CLASSES, BatchNormLayer, ConvLayer, FcLayer, FlattenLayer, Layer,
                     LinearActivation, ReluLayer, GradientBundle)
from .pooling import PoolingOp, pool_backward, pool_forward
from .tensor import ShapeError

INPUT_SHAPE = (3, 32, 32)
GROUPS = ("CL", "FC")


@dataclass(frozen=True)
class ConvBlock:
    """``count`` consecutive K×K convolutions of the same depth."""
    count: int
    depth: int
    kernel: int = 3
    padding: int = 1
    batchnorm: bool = True


@dataclass(frozen=True)
class Pool:
    op: PoolingOp


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Fc:
    out_units: int


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"

    def __post_init__(self):
        if self.kind not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.kind!r}")


@dataclass(frozen=True)
class SoftmaxOutput:
    """Final affine layer producing ``classes`` logits fed to softmax."""
    classes: int = NUM_CLASSES


Item = Union[ConvBlock, Pool, Flatten, Fc, Activation, SoftmaxOutput]


@dataclass
class ArchSpec:
    items: list
    name: str = "custom"

    def to_dict(self) -> dict:
        out = []
        for it in self.items:
            d = {"type": type(it).__name__}
            if isinstance(it, Pool):
                d["op"] = str(it.op)
            else:
                d.update(asdict(it))
            out.append(d)
        return {"name": self.name, "items": out}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        from .pooling import parse_stack

        kinds = {c.__name__: c for c in (ConvBlock, Pool, Flatten, Fc, Activation, SoftmaxOutput)}
        items = []
        for i, raw in enumerate(d["items"]):
            raw = dict(raw)
            t = raw.pop("type", None)
            if t not in kinds:
                raise ArchError(i, f"unknown item type {t!r}")
            if t == "Pool":
                (op,) = parse_stack(raw["op"])
                items.append(Pool(op))
            else:
                items.append(kinds[t](**raw))
        return cls(items=items, name=d.get("name", "custom"))

    @classmethod
    def from_json(cls, text: str) -> "ArchSpec":
        return cls.from_dict(json.loads(text))


class ArchError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"item {index}: {message}")
        self.index = index


def _validate_structure(spec: ArchSpec):
    items = spec.items
    soft = [i for i, it in enumerate(items) if isinstance(it, SoftmaxOutput)]
    if len(soft) != 1 or soft[0] != len(items) - 1:
        raise ArchError(len(items) - 1, "exactly one SoftmaxOutput is required, as the last item")
    flat = [i for i, it in enumerate(items) if isinstance(it, Flatten)]
    if len(flat) != 1:
        raise ArchError(flat[1] if len(flat) > 1 else 0, "exactly one Flatten is required")
    for i, it in enumerate(items):
        if isinstance(it, (Fc, SoftmaxOutput)) and i < flat[0]:
            raise ArchError(i, "fully connected item before Flatten")
        if isinstance(it, (ConvBlock, Pool)) and i > flat[0]:
            raise ArchError(i, "spatial item after Flatten")


def shape_trace(spec: ArchSpec, input_shape=INPUT_SHAPE) -> list[tuple[int, ...]]:
    """Output shape (without batch axis) after every item of ``spec``."""
    _validate_structure(spec)
    shape = tuple(input_shape)
    out = []
    for i, it in enumerate(spec.items):
        if isinstance(it, ConvBlock):
            c, h, w = shape
            for _ in range(it.count):
                h = h + 2 * it.padding - it.kernel + 1
                w = w + 2 * it.padding - it.kernel + 1
                if h < 1 or w < 1:
                    raise ArchError(i, f"input too small for {it.kernel}x{it.kernel} conv")
            shape = (it.depth, h, w)
        elif isinstance(it, Pool):
            c, h, w = shape
            k = it.op.window
            if h % k or w % k:
                raise ArchError(i, f"{h}x{w} is not divisible by pooling window {k}")
            shape = (c, h // k, w // k)
        elif isinstance(it, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(it, Fc):
            shape = (it.out_units,)
        elif isinstance(it, SoftmaxOutput):
            shape = (it.classes,)
        out.append(shape)
    return out


def flatten_width(spec: ArchSpec, input_shape=INPUT_SHAPE) -> int:
    trace = shape_trace(spec, input_shape)
    i = next(i for i, it in enumerate(spec.items) if isinstance(it, Flatten))
    return trace[i][0]


def param_count(spec: ArchSpec, input_shape=INPUT_SHAPE) -> int:
    """Exact number of trainable scalars (conv/FC weights and biases, BN scale/shift)."""
    trace = shape_trace(spec, input_shape)
    total = 0
    prev = tuple(input_shape)
    for it, shape in zip(spec.items, trace):
        if isinstance(it, ConvBlock):
            c = prev[0]
            for _ in range(it.count):
                total += it.depth * c * it.kernel ** 2 + it.depth
                if it.batchnorm:
                    total += 2 * it.depth
                c = it.depth
        elif isinstance(it, (Fc, SoftmaxOutput)):
            total += prev[0] * shape[0] + shape[0]
        prev = shape
    return total


class PoolLayer(Layer):
    def __init__(self, op: PoolingOp):
        super().__init__()
        self.op = op

    def forward(self, x, train=True):
        y, self._memo = pool_forward(self.op, x)
        return y

    def backward(self, grad_out):
        return self._bundle(pool_backward(self.op, self._memo, grad_out))


@dataclass
class Network:
    spec: ArchSpec
    layers: list
    trace: list
    input_shape: tuple = INPUT_SHAPE
    _forwarded: bool = field(default=False, repr=False)

    def parameters(self):
        """Yield ``(group, key, array)`` for every trainable parameter."""
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield layer.group, f"{i}.{name}", p

    def grads(self):
        for i, layer in enumerate(self.layers):
            for name, g in layer.grads.items():
                yield layer.group, f"{i}.{name}", g

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {key: p for _, key, p in self.parameters()}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, BatchNormLayer):
                state[f"{i}.running_mean"] = layer.running_mean
                state[f"{i}.running_var"] = layer.running_var
        return state

    def load_state_dict(self, state: dict):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                layer.params[name][...] = state[f"{i}.{name}"]
            if isinstance(layer, BatchNormLayer):
                layer.running_mean = np.array(state[f"{i}.running_mean"])
                layer.running_var = np.array(state[f"{i}.running_var"])

    def forward(self, x, mode: str = "train"):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ShapeError(f"expected input (n, {', '.join(map(str, self.input_shape))}), "
                             f"got {x.shape}")
        train = mode == "train"
        for layer in self.layers:
            x = layer.forward(x, train=train)
        self._forwarded = train
        return x

    def backward(self, grad_logits) -> dict[str, GradientBundle]:
        """Backpropagate ``dL/dlogits``; returns one bundle per parameter group."""
        if not self._forwarded:
            raise RuntimeError("backward needs a preceding train-mode forward pass")
        bundles = {g: GradientBundle() for g in GROUPS}
        g = grad_logits
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            b = layer.backward(g)
            for name, grad in b.params.items():
                bundles[layer.group].params[f"{i}.{name}"] = grad
            g = b.input
        for b in bundles.values():
            b.input = g
        return bundles


def build(spec: ArchSpec, seed: int = 0, dtype=np.float64, init: str = "normal",
          input_shape=INPUT_SHAPE) -> Network:
    """Instantiate ``spec`` with He-initialised weights drawn from ``seed``."""
    trace = shape_trace(spec, input_shape)
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    prev = tuple(input_shape)
    for it, shape in zip(spec.items, trace):
        if isinstance(it, ConvBlock):
            c = prev[0]
            for _ in range(it.count):
                layers.append(ConvLayer(c, it.depth, it.kernel, it.padding, rng, dtype, init))
                if it.batchnorm:
                    layers.append(BatchNormLayer(it.depth, dtype=dtype))
                layers.append(ReluLayer())
                c = it.depth
        elif isinstance(it, Pool):
            layers.append(PoolLayer(it.op))
        elif isinstance(it, Flatten):
            layers.append(FlattenLayer())
        elif isinstance(it, (Fc, SoftmaxOutput)):
            layers.append(FcLayer(prev[0], shape[0], rng, dtype, init))
        elif isinstance(it, Activation):
            layers.append(ReluLayer() if it.kind == "relu" else LinearActivation())
        prev = shape
    return Network(spec=spec, layers=layers, trace=trace, input_shape=tuple(input_shape))
