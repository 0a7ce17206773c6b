"""CPU convnet engine for studying where pooling sits in a network.

Exact max/average pooling stacks with backprop route tracing, numpy
conv/FC/batch-norm layers, the A-VGG and A-LeNet5 architecture family with
their training recipes, and the local-versus-global pooling experiments.
"""
from . import arch, data, layers, network, optim, pooling, tensor
from .arch import build_spec
from .network import ArchSpec, build, shape_trace
from .pooling import AP, MP, PoolingOp, route_mask, route_report

__version__ = "0.1.0"

__all__ = [
    "arch", "data", "layers", "network", "optim", "pooling", "tensor",
    "build_spec", "ArchSpec", "build", "shape_trace",
    "AP", "MP", "PoolingOp", "route_mask", "route_report",
]
