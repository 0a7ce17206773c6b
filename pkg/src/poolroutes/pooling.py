"""Non-overlapping max/average pooling, pooling stacks and route tracing.

A stack is written leftmost-first: ``[AP(3), MP(2)]`` applies the 3×3
average pool to the input and the 2×2 max pool to its result.  Routes are
the stack-input positions that receive a nonzero gradient when a unit
gradient is pushed back from every stack output.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from enum import Enum
from math import prod

import numpy as np

from .tensor import ShapeError, blocks, unblocks


class PoolKind(str, Enum):
    MAX = "MP"
    AVG = "AP"


@dataclass(frozen=True)
class PoolingOp:
    kind: PoolKind
    window: int

    def __post_init__(self):
        object.__setattr__(self, "kind", PoolKind(self.kind))
        if self.window < 2:
            raise ValueError(f"pooling window must be >= 2, got {self.window}")

    def __str__(self):
        return f"{self.kind.value}{self.window}"


def MP(k: int) -> PoolingOp:
    return PoolingOp(PoolKind.MAX, k)


def AP(k: int) -> PoolingOp:
    return PoolingOp(PoolKind.AVG, k)


_TOKEN = re.compile(r"^\s*(MP|AP)\s*(\d+)\s*$", re.IGNORECASE)


def parse_stack(text: str) -> list[PoolingOp]:
    """Parse ``"AP3,MP2"`` into ``[AP(3), MP(2)]`` (leftmost applied first)."""
    ops = []
    for tok in text.split(","):
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad pooling token {tok!r}; expected e.g. MP2 or AP3")
        ops.append(PoolingOp(PoolKind(m.group(1).upper()), int(m.group(2))))
    if not ops:
        raise ValueError("empty pooling stack")
    return ops


def format_stack(stack) -> str:
    return ",".join(str(op) for op in stack)


def reduction(stack) -> int:
    return prod(op.window for op in stack)


def pool_forward(op: PoolingOp, x: np.ndarray):
    """Pool ``x``; returns ``(y, memo)`` where memo holds argmax indices for MP."""
    b = blocks(x, op.window)
    if op.kind is PoolKind.MAX:
        idx = b.argmax(axis=-1)
        y = np.take_along_axis(b, idx[..., None], axis=-1)[..., 0]
        return y, idx
    return b.mean(axis=-1), None


def pool_backward(op: PoolingOp, memo, grad_out: np.ndarray) -> np.ndarray:
    k = op.window
    if op.kind is PoolKind.MAX:
        if memo is None or memo.shape != grad_out.shape:
            raise ShapeError("max-pool memo does not match grad_out shape")
        gb = np.zeros(grad_out.shape + (k * k,), dtype=grad_out.dtype)
        np.put_along_axis(gb, memo[..., None], grad_out[..., None], axis=-1)
    else:
        gb = np.broadcast_to((grad_out / (k * k))[..., None], grad_out.shape + (k * k,))
    return unblocks(gb, k)


def stack_forward(stack, x: np.ndarray):
    memos = []
    for op in stack:
        x, memo = pool_forward(op, x)
        memos.append((x.shape, memo))
    return x, memos


def stack_backward(stack, memos, grad_out: np.ndarray) -> np.ndarray:
    if len(memos) != len(stack):
        raise ShapeError("memo list does not match the stack")
    g = grad_out
    for op, (shape, memo) in zip(reversed(stack), reversed(memos)):
        if g.shape != shape:
            raise ShapeError(f"gradient shape {g.shape} does not match pooled shape {shape}")
        g = pool_backward(op, memo, g)
    return g


def route_mask(stack, x: np.ndarray) -> np.ndarray:
    """Boolean mask of stack-input positions with a nonzero backprop path."""
    y, memos = stack_forward(stack, x)
    g = stack_backward(stack, memos, np.ones_like(y))
    return np.abs(g) > 0


@dataclass(frozen=True)
class RouteReport:
    channel: int
    block_row: int
    block_col: int
    count: int
    bbox_rows: int
    bbox_cols: int
    window: int
    confined: bool | None = None

    @property
    def localized(self) -> bool:
        if self.confined is not None:
            return self.confined
        return max(self.bbox_rows, self.bbox_cols) < self.window

    @property
    def classification(self) -> str:
        return "localized" if self.localized else "delocalized"

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "block": [self.block_row, self.block_col],
            "count": self.count,
            "bounding_box": [self.bbox_rows, self.bbox_cols],
            "window": self.window,
            "classification": self.classification,
        }


def route_report(mask: np.ndarray, window: int, cell: int | None = None) -> list[RouteReport]:
    """Summarise a route mask per (channel, output window) of the first sample.

    Without ``cell`` a window's routes are localized when their bounding box
    is strictly smaller than the window.  With ``cell`` they are localized
    when they all fall inside one aligned cell×cell sub-block, which is the
    value-independent test (use ``stack_cell(stack)`` for a stack's cell).
    """
    if mask.ndim == 2:
        mask = mask[None, None]
    b = blocks(mask, window)
    reports = []
    _, c, hb, wb, _ = b.shape
    for ch in range(c):
        for i in range(hb):
            for j in range(wb):
                m = b[0, ch, i, j].reshape(window, window)
                rows, cols = np.nonzero(m)
                if rows.size:
                    br = int(rows.max() - rows.min() + 1)
                    bc = int(cols.max() - cols.min() + 1)
                else:
                    br = bc = 0
                confined = None
                if cell is not None:
                    confined = bool(rows.size) and (
                        len(set((rows // cell).tolist())) == 1
                        and len(set((cols // cell).tolist())) == 1)
                reports.append(RouteReport(ch, i, j, int(m.sum()), br, bc, window, confined))
    return reports


def stack_cell(stack) -> int:
    """Side of the sub-block selected by the stack's last (output-side) operator."""
    return reduction(stack) // stack[-1].window


def expected_route_count(stack) -> int:
    """Routes per stack output: each AP(k) multiplies the fan-out by k², MP by 1."""
    return prod(op.window ** 2 for op in stack if op.kind is PoolKind.AVG)


def enumerate_stacks(n: int, kinds=(PoolKind.MAX, PoolKind.AVG), window: int = 2):
    """All ``len(kinds)**n`` ordered stacks of n window×window pools."""
    if n < 1:
        raise ValueError("n must be >= 1")
    kinds = [PoolKind(k) for k in kinds]
    return [[PoolingOp(k, window) for k in combo]
            for combo in itertools.product(kinds, repeat=n)]
