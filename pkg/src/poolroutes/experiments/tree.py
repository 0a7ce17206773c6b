"""Binary-tree toy model of local (greedy) versus global route selection.

A tree of depth ``d`` has ``2**l`` valued nodes on each level ``l = 1..d``
(the root carries no value).  A greedy descent picks the larger child at
every level, the way a max-pool compares activations; the global choice is
the root-to-leaf path with the largest product of node values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import ProbabilityEstimate

DEFAULT_VALUES = (1.0, 10.0, 1000.0)


@dataclass
class ValueTree:
    levels: list  # levels[l-1] holds the 2**l values of level l

    def __post_init__(self):
        self.levels = [np.asarray(v, dtype=np.float64) for v in self.levels]
        for l, v in enumerate(self.levels, start=1):
            if v.shape != (2 ** l,):
                raise ValueError(f"level {l} needs {2 ** l} values, got {v.shape}")
            if np.any(v <= 0):
                raise ValueError("node values must be positive")

    @property
    def depth(self) -> int:
        return len(self.levels)

    @classmethod
    def from_flat(cls, values) -> "ValueTree":
        values = np.asarray(values, dtype=np.float64)
        levels, start, l = [], 0, 1
        while start < values.size:
            levels.append(values[start:start + 2 ** l])
            start += 2 ** l
            l += 1
        return cls(levels)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.levels)

    def path_value(self, path) -> float:
        idx, value = 0, 1.0
        for level, bit in zip(self.levels, path):
            idx = 2 * idx + bit
            value *= level[idx]
        return value


def tree_greedy(tree: ValueTree) -> tuple[tuple[int, ...], float]:
    """Descend choosing the larger child (ties go left); returns (path bits, product)."""
    idx, path, value = 0, [], 1.0
    for level in tree.levels:
        left, right = level[2 * idx], level[2 * idx + 1]
        bit = int(right > left)
        idx = 2 * idx + bit
        path.append(bit)
        value *= level[idx]
    return tuple(path), value


def tree_global(tree: ValueTree) -> tuple[tuple[int, ...], float]:
    """Brute-force best product over all 2**d paths (ties go to the leftmost path)."""
    d = tree.depth
    best_path, best = None, -np.inf
    for leaf in range(2 ** d):
        path = tuple((leaf >> (d - 1 - l)) & 1 for l in range(d))
        v = tree.path_value(path)
        if v > best:
            best_path, best = path, v
    return best_path, best


def _batch_greedy(flat: np.ndarray, depth: int) -> np.ndarray:
    """Greedy product for each row of ``flat`` (T, 2**(d+1) - 2)."""
    t = flat.shape[0]
    rows = np.arange(t)
    idx = np.zeros(t, dtype=np.int64)
    value = np.ones(t)
    offset = 0
    for l in range(1, depth + 1):
        left = flat[rows, offset + 2 * idx]
        right = flat[rows, offset + 2 * idx + 1]
        take_right = right > left
        idx = 2 * idx + take_right
        value *= np.where(take_right, right, left)
        offset += 2 ** l
    return value


def _batch_global(flat: np.ndarray, depth: int) -> np.ndarray:
    """Best path product for each row, by dynamic programming from the leaves up."""
    offsets = np.concatenate([[0], np.cumsum([2 ** l for l in range(1, depth + 1)])])
    best = flat[:, offsets[depth - 1]:offsets[depth]]
    for l in range(depth - 1, 0, -1):
        child_best = np.maximum(best[:, 0::2], best[:, 1::2])
        best = flat[:, offsets[l - 1]:offsets[l]] * child_best
    return np.maximum(best[:, 0], best[:, 1])


def random_trees(depth: int, count: int, rng: np.random.Generator,
                 values=DEFAULT_VALUES) -> np.ndarray:
    """``count`` trees as flat rows, node values uniform over ``values``."""
    values = np.asarray(values, dtype=np.float64)
    n_nodes = 2 ** (depth + 1) - 2
    return values[rng.integers(0, values.size, size=(count, n_nodes))]


def tree_disagreement_prob(depth: int, values=DEFAULT_VALUES, trials: int = 100_000,
                           seed: int = 0, chunk: int = 50_000) -> ProbabilityEstimate:
    """Monte-Carlo probability that the greedy descent misses the best product.

    The event is ``greedy product < global product``, i.e. the greedy path is
    not among the maximising paths.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        flat = random_trees(depth, m, rng, values)
        g = _batch_greedy(flat, depth)
        best = _batch_global(flat, depth)
        if np.any(best < g):
            raise AssertionError("global optimum below greedy value")
        hits += int(np.count_nonzero(g < best))
        done += m
    return ProbabilityEstimate.from_counts(hits, trials)
