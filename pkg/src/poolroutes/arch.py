"""Named architecture builders: VGG/LeNet baselines and their A- variants.

VGG-family convolutions are 3×3, padding 1, followed by batch norm and
ReLU.  LeNet-family convolutions are 5×5 without padding or batch norm.
"""
from __future__ import annotations

from .network import (Activation, ArchSpec, ConvBlock, Fc, Flatten, Pool, SoftmaxOutput,
                      param_count)
from .pooling import AP, MP

__all__ = ["ARCH_NAMES", "build_spec", "param_count", "LENET_POOLS"]


def _vgg(name, blocks, fc_hidden, activation="relu"):
    items = []
    for b in blocks:
        if isinstance(b, tuple):
            items.append(ConvBlock(*b))
        else:
            items.append(Pool(b))
    items.append(Flatten())
    for units in fc_hidden:
        items += [Fc(units), Activation(activation)]
    items.append(SoftmaxOutput(10))
    return ArchSpec(items, name)


def _lenet_conv(depth):
    return ConvBlock(1, depth, kernel=5, padding=0, batchnorm=False)


def _lenet(name, pools):
    items = [_lenet_conv(6), _lenet_conv(16)]
    items += [Pool(op) for op in pools]
    items += [Flatten(), Fc(120), Activation(), Fc(84), Activation(), SoftmaxOutput(10)]
    return ArchSpec(items, name)


# leftmost operator is applied first (closest to the convolutions)
LENET_POOLS = {
    "a": (AP(2), MP(2)),
    "b": (MP(2), AP(2)),
    "c": (AP(3), MP(2)),
    "d": (MP(3), AP(2)),
    "e": (AP(2), MP(3)),
}


def _a_vgg_small(name, last_pool, fc_hidden, activation="relu"):
    return _vgg(name, [(1, 64), (1, 128), (1, 256), AP(2), (2, 512), last_pool],
                fc_hidden, activation)


def _a_vgg_deep(name, deep_count, last_pool, fc_hidden, activation="relu"):
    return _vgg(name, [(2, 64), (2, 128), (3, 256), AP(4), (deep_count, 512), last_pool],
                fc_hidden, activation)


_BUILDERS = {
    "VGG16": lambda: _vgg("VGG16", [(2, 64), MP(2), (2, 128), MP(2), (3, 256), MP(2),
                                    (3, 512), MP(2), (3, 512), MP(2)], (4096, 4096)),
    "VGG8": lambda: _vgg("VGG8", [(1, 64), MP(2), (1, 128), MP(2), (1, 256), MP(2),
                                  (1, 512), MP(2), (1, 512), MP(2)], (8192, 8192)),
    "A-VGG6": lambda: _a_vgg_small("A-VGG6", MP(8), ()),
    "A-VGG8": lambda: _a_vgg_small("A-VGG8", MP(4), (8192, 8192)),
    "A-VGG13": lambda: _a_vgg_deep("A-VGG13", 3, MP(4), (2048, 2048)),
    "A-VGG14": lambda: _a_vgg_deep("A-VGG14", 6, MP(2), ()),
    "A-VGG16": lambda: _a_vgg_deep("A-VGG16", 6, MP(2), (4096, 4096)),
    "A-VGG13-linear": lambda: _a_vgg_deep("A-VGG13-linear", 3, MP(4), (2048, 2048), "linear"),
    "A-VGG16-linear": lambda: _a_vgg_deep("A-VGG16-linear", 6, MP(2), (4096, 4096), "linear"),
    "LeNet5": lambda: ArchSpec([_lenet_conv(6), Pool(MP(2)), _lenet_conv(16), Pool(MP(2)),
                                Flatten(), Fc(120), Activation(), Fc(84), Activation(),
                                SoftmaxOutput(10)], "LeNet5"),
    **{f"A-LeNet5-{k}": (lambda k=k: _lenet(f"A-LeNet5-{k}", LENET_POOLS[k]))
       for k in LENET_POOLS},
    # single 4×4 pool after the second conv; not one of the lettered variants
    "LeNet5-single-MP4": lambda: _lenet("LeNet5-single-MP4", (MP(4),)),
    "LeNet5-single-AP4": lambda: _lenet("LeNet5-single-AP4", (AP(4),)),
}

ARCH_NAMES = tuple(_BUILDERS)


def canonical_arch(name: str) -> str:
    for key in _BUILDERS:
        if key.lower() == name.lower():
            return key
    raise KeyError(f"unknown architecture {name!r}; known: {', '.join(_BUILDERS)}")


def build_spec(name: str) -> ArchSpec:
    return _BUILDERS[canonical_arch(name)]()
