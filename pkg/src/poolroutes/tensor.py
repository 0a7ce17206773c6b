"""Dense 4-D arrays in (batch, channel, row, col) layout.

Tensors are plain ``numpy.ndarray`` objects; this module only adds the
shape checks and the windowed helpers the pooling code is built on.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when tensor extents are incompatible with an operation."""


def check_shape(shape) -> tuple[int, int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ShapeError(f"expected a 4-D shape (n, c, h, w), got {shape}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    if int(np.prod(shape, dtype=object)) > np.iinfo(np.int64).max:
        raise ShapeError(f"shape {shape} overflows the element count")
    return shape


def as_tensor(x, dtype=None) -> np.ndarray:
    x = np.asarray(x, dtype=dtype if dtype is not None else None)
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-D tensor, got ndim={x.ndim}")
    check_shape(x.shape)
    return x


def tensor_full(shape, value, dtype=DTYPE) -> np.ndarray:
    """Tensor of the given (n, c, h, w) shape filled with ``value``."""
    return np.full(check_shape(shape), value, dtype=dtype)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def blocks(x: np.ndarray, k: int) -> np.ndarray:
    """View ``x`` as non-overlapping k×k blocks.

    Returns an array of shape (n, c, h/k, w/k, k*k) whose last axis holds
    each block in row-major order.
    """
    n, c, h, w = x.shape
    if k < 1 or h % k or w % k:
        raise ShapeError(f"spatial extent {h}x{w} is not divisible by window {k}")
    b = x.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
    return b.reshape(n, c, h // k, w // k, k * k)


def unblocks(b: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`blocks`."""
    n, c, hb, wb, _ = b.shape
    x = b.reshape(n, c, hb, wb, k, k).transpose(0, 1, 2, 4, 3, 5)
    return x.reshape(n, c, hb * k, wb * k)


def window_iter(x: np.ndarray, k: int) -> Iterator[tuple[int, int, int, np.ndarray]]:
    """Yield ``(channel, block_row, block_col, k×k values)`` per block.

    Only the first sample of the batch is walked; blocks come out in
    row-major order within each channel.
    """
    b = blocks(as_tensor(x), k)
    _, c, hb, wb, _ = b.shape
    for ch in range(c):
        for i in range(hb):
            for j in range(wb):
                yield ch, i, j, b[0, ch, i, j].reshape(k, k)


def argmax_window(values) -> tuple[int, float]:
    """Row-major index and value of the block maximum; ties go to the lowest index."""
    flat = np.asarray(values).ravel()
    if flat.size == 0:
        raise ShapeError("empty window")
    idx = int(np.argmax(flat))
    return idx, flat[idx].item()
