"""Sequence pooling (SP) versus top pooling (TP) on random conv chains.

SP puts a 2×2 max pool after each of the first ``n`` conv+ReLU layers; TP
runs the same filters without pooling and applies one ``2**n`` max pool at
the end.  Both produce the same output grid, and we estimate how often an
SP output exceeds the TP output at the same position.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numba
import numpy as np

from ..layers import ConvLayer, he_init
from ..pooling import MP, pool_forward
from .stats import ProbabilityEstimate


@dataclass(frozen=True)
class SpTpConfig:
    extent: int = 256
    depths: tuple = (1,) * 10   # channel count after each conv; input has depths[0] channels
    n: int = 2
    samples: int = 2000
    seed: int = 0
    identity_filters: bool = False
    batch: int = 32

    @property
    def layers(self) -> int:
        return len(self.depths)

    def validate(self):
        if self.n < 0 or self.n > self.layers:
            raise ValueError(f"n must lie in [0, {self.layers}], got {self.n}")
        if self.extent % (2 ** self.n):
            raise ValueError(f"extent {self.extent} is not divisible by 2**{self.n}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depths"] = list(self.depths)
        return d


def _conv3_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-sample 3×3 'same' cross-correlation.

    x: (B, Cin, H, W); w: (B, Cout, Cin, 3, 3) -> (B, Cout, H, W)
    """
    b, cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    if cin == 1 and w.shape[1] == 1:
        out = np.zeros((b, 1, h, wd), dtype=x.dtype)
        for i in range(3):
            for j in range(3):
                out += w[:, :, :, i, j].reshape(b, 1, 1, 1) * xp[:, :, i:i + h, j:j + wd]
        return out
    out = np.zeros((b, w.shape[1], h, wd), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            out += np.einsum("boc,bchw->bohw", w[:, :, :, i, j], xp[:, :, i:i + h, j:j + wd])
    return out


@numba.njit(cache=True)
def _conv3_relu_2d(x, w):
    """Single-channel 3×3 'same' cross-correlation followed by ReLU."""
    h, wd = x.shape
    out = np.empty_like(x)
    for i in range(h):
        for j in range(wd):
            acc = 0.0
            for di in range(3):
                ii = i + di - 1
                if ii < 0 or ii >= h:
                    continue
                for dj in range(3):
                    jj = j + dj - 1
                    if jj < 0 or jj >= wd:
                        continue
                    acc += w[di, dj] * x[ii, jj]
            out[i, j] = acc if acc > 0.0 else 0.0
    return out


@numba.njit(cache=True)
def _maxpool_2d(x, k):
    h, wd = x.shape
    out = np.empty((h // k, wd // k), dtype=x.dtype)
    for bi in range(h // k):
        for bj in range(wd // k):
            m = x[bi * k, bj * k]
            for i in range(bi * k, bi * k + k):
                for j in range(bj * k, bj * k + k):
                    if x[i, j] > m:
                        m = x[i, j]
            out[bi, bj] = m
    return out


@numba.njit(cache=True)
def _branches_2d(x, filters, n):
    """(SP output, TP output) for one single-channel sample; filters is (L, 3, 3)."""
    sp = x
    for l in range(filters.shape[0]):
        sp = _conv3_relu_2d(sp, filters[l])
        if l < n:
            sp = _maxpool_2d(sp, 2)
    tp = x
    for l in range(filters.shape[0]):
        tp = _conv3_relu_2d(tp, filters[l])
    if n > 0:
        tp = _maxpool_2d(tp, 2 ** n)
    return sp, tp


def _identity_filters(cin: int, cout: int) -> np.ndarray:
    w = np.zeros((cout, cin, 3, 3))
    w[np.arange(cout), np.arange(cout) % cin, 1, 1] = 1.0
    return w


def sample_filters(cfg: SpTpConfig, rng: np.random.Generator) -> list[np.ndarray]:
    chans = (cfg.depths[0],) + tuple(cfg.depths)
    out = []
    for cin, cout in zip(chans[:-1], chans[1:]):
        if cfg.identity_filters:
            out.append(_identity_filters(cin, cout))
        else:
            out.append(rng.standard_normal((cout, cin, 3, 3)))
    return out


def sp_branch(x, filters, n):
    for l, w in enumerate(filters):
        x = np.maximum(_conv3_same(x, w), 0)
        if l < n:
            x, _ = pool_forward(MP(2), x)
    return x


def tp_branch(x, filters, n):
    for w in filters:
        x = np.maximum(_conv3_same(x, w), 0)
    if n:
        x, _ = pool_forward(MP(2 ** n), x)
    return x


def checksum(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def _draw(cfg: SpTpConfig, index: int):
    """Input and filters for sample ``index``; depends only on (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    x = rng.standard_normal((cfg.depths[0], cfg.extent, cfg.extent))
    return x, sample_filters(cfg, rng)


def sp_tp_probability(cfg: SpTpConfig) -> ProbabilityEstimate:
    """Estimate P(O_SP > O_TP) over output positions and random samples.

    Each sample draws a fresh standard-normal input and fresh 3×3 filters
    shared by both branches.  Positions where both outputs are zero count as
    "not greater".
    """
    cfg.validate()
    hits = trials = 0
    per_sample = []
    if all(d == 1 for d in cfg.depths):
        for i in range(cfg.samples):
            x, filters = _draw(cfg, i)
            sp, tp = _branches_2d(x[0], np.stack([f[0, 0] for f in filters]), cfg.n)
            greater = sp > tp
            hits += int(greater.sum())
            trials += greater.size
            per_sample.append(greater.mean())
        return ProbabilityEstimate.from_counts(hits, trials, per_sample, n=cfg.n,
                                               samples=cfg.samples)
    for start in range(0, cfg.samples, cfg.batch):
        idx = range(start, min(start + cfg.batch, cfg.samples))
        draws = [_draw(cfg, i) for i in idx]
        x = np.stack([d[0] for d in draws])
        filters = [np.stack([d[1][l] for d in draws]) for l in range(cfg.layers)]
        sp = sp_branch(x, filters, cfg.n)
        tp = tp_branch(x, filters, cfg.n)
        assert sp.shape == tp.shape
        greater = (sp > tp).reshape(len(draws), -1)
        hits += int(greater.sum())
        trials += greater.size
        per_sample.extend(greater.mean(axis=1).tolist())
    return ProbabilityEstimate.from_counts(hits, trials, per_sample, n=cfg.n,
                                           samples=cfg.samples)


def sp_tp_sweep(cfg: SpTpConfig, ns=(2, 4, 6)) -> list[ProbabilityEstimate]:
    out = []
    for n in ns:
        c = SpTpConfig(**{**cfg.to_dict(), "depths": tuple(cfg.depths), "n": n})
        out.append(sp_tp_probability(c))
    return out


VGG8_DEPTHS = (64, 128, 256, 512, 512)


def vgg8_filter_set(seed: int, depths=VGG8_DEPTHS, in_channels: int = 3,
                    identity: bool = False, dtype=np.float64) -> list[ConvLayer]:
    """Five random 3×3 'same' convolutions (He normal, zero bias)."""
    rng = np.random.default_rng(seed)
    layers, cin = [], in_channels
    for cout in depths:
        layer = ConvLayer(cin, cout, 3, padding=1, rng=rng, dtype=dtype)
        if identity:
            layer.params["weight"][...] = _identity_filters(cin, cout)
        else:
            layer.params["weight"][...] = he_init(cin * 9, (cout, cin, 3, 3), rng, dtype)
        layers.append(layer)
        cin = cout
    return layers


def _vgg8_outputs(images, convs, batch=10):
    """SP and TP outputs (N, C) for a shared filter set."""
    n = len(convs)
    sp_out, tp_out = [], []
    for s in range(0, len(images), batch):
        x = images[s:s + batch]
        sp, tp = x, x
        for conv in convs:
            sp = np.maximum(conv.forward(sp, train=False), 0)
            sp, _ = pool_forward(MP(2), sp)
        for conv in convs:
            tp = np.maximum(conv.forward(tp, train=False), 0)
        tp, _ = pool_forward(MP(2 ** n), tp)
        sp_out.append(sp.reshape(len(x), -1))
        tp_out.append(tp.reshape(len(x), -1))
    return np.concatenate(sp_out), np.concatenate(tp_out)


def sp_tp_vgg8(images: np.ndarray, filter_seeds=(0, 1, 2, 3, 4), identity: bool = False,
               depths=VGG8_DEPTHS, dtype=np.float64) -> ProbabilityEstimate:
    """P(O_SP > O_TP) over the per-channel scalar outputs of a 5-conv VGG8 trunk.

    SP pools 2×2 after every conv; TP pools once with a 32×32 window after
    the fifth.  ``images`` is an (N, 3, 32, 32) batch.
    """
    images = np.asarray(images, dtype=dtype)
    hits = trials = 0
    per_input = []
    for seed in filter_seeds:
        convs = vgg8_filter_set(seed, depths, images.shape[1], identity, dtype)
        sp, tp = _vgg8_outputs(images, convs)
        greater = sp > tp
        hits += int(greater.sum())
        trials += greater.size
        per_input.extend(greater.mean(axis=1).tolist())
    return ProbabilityEstimate.from_counts(hits, trials, per_input,
                                           inputs=len(images), filter_sets=len(filter_seeds))
