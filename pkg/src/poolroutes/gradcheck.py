"""Central finite-difference checks for every analytic backward pass.

Each check builds a scalar probe loss ``L = sum(r * f(x))`` with a random
weighting ``r``, so ``dL/df = r`` is what gets pushed through backward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pooling as P
from .layers import BatchNormLayer, ConvLayer, FcLayer, ReluLayer, softmax_cross_entropy
from .network import ArchSpec, ConvBlock, Flatten, Pool, PoolLayer, SoftmaxOutput, build
from .tensor import blocks

H = 1e-5
LAYER_TOL = 1e-4
NETWORK_TOL = 1e-3
# Entries with both magnitudes below FLOOR are held to an absolute error of
# tol * FLOOR; exact-zero gradients (e.g. a conv bias feeding batch norm)
# otherwise turn O(1e-11) round-off into a large relative error.
FLOOR = 1e-5


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric, floor: float = FLOOR) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tol: float
    trials: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)

    def row(self) -> str:
        return (f"{self.name:<28} trials={self.trials:<3} max_rel_err={self.max_rel_error:.2e} "
                f"tol={self.tol:.0e} {'PASS' if self.passed else 'FAIL'}")


def _check_layer(layer, x, forward, rng):
    y = forward(x)
    r = rng.standard_normal(y.shape)
    bundle = layer.backward(r)
    loss = lambda: float(np.sum(r * forward(x)))  # noqa: E731
    err = rel_error(bundle.input, numeric_grad(loss, x))
    for name, p in layer.params.items():
        err = max(err, rel_error(bundle.params[name], numeric_grad(loss, p)))
    return err


def check_conv(trials=20, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cin, cout = rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.choice([1, 3, 5]))
        pad = int(rng.integers(0, (k - 1) // 2 + 1))
        layer = ConvLayer(cin, cout, k, pad, rng)
        layer.params["bias"][...] = rng.standard_normal(cout)
        x = rng.standard_normal((int(rng.integers(1, 3)), cin, 6, 6))
        worst = max(worst, _check_layer(layer, x, layer.forward, rng))
    return CheckResult("conv", worst, LAYER_TOL, trials)


def check_fc(trials=20, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        layer = FcLayer(10, 7, rng)
        layer.params["bias"][...] = rng.standard_normal(7)
        x = rng.standard_normal((4, 10))
        worst = max(worst, _check_layer(layer, x, layer.forward, rng))
    return CheckResult("fc", worst, LAYER_TOL, trials)


def check_batchnorm(trials=20, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        layer = BatchNormLayer(2)
        layer.params["gamma"][...] = rng.uniform(0.5, 2.0, 2)
        layer.params["beta"][...] = rng.standard_normal(2)
        x = rng.standard_normal((4, 2, 3, 3)) * rng.uniform(0.5, 3.0)
        fwd = lambda z: layer.forward(z, train=True)  # noqa: E731
        worst = max(worst, _check_layer(layer, x, fwd, rng))
    return CheckResult("batchnorm", worst, LAYER_TOL, trials)


def check_softmax_ce(trials=20, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        logits = rng.standard_normal((4, 10)) * 2
        labels = rng.integers(0, 10, 4)
        _, g = softmax_cross_entropy(logits, labels)
        num = numeric_grad(lambda: softmax_cross_entropy(logits, labels)[0], logits)
        worst = max(worst, rel_error(g, num))
    return CheckResult("softmax_cross_entropy", worst, LAYER_TOL, trials)


def check_stack(stack, trials=20, seed=4, channels=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    side = P.reduction(stack)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((1, channels, side, side))
        y, memos = P.stack_forward(stack, x)
        r = rng.standard_normal(y.shape)
        g = P.stack_backward(stack, memos, r)
        num = numeric_grad(lambda: float(np.sum(r * P.stack_forward(stack, x)[0])), x)
        worst = max(worst, rel_error(g, num))
    return CheckResult(f"stack[{P.format_stack(stack)}]", worst, LAYER_TOL, trials)


TINY_SPEC = ArchSpec([ConvBlock(2, 2, kernel=3, padding=1, batchnorm=True), Pool(P.MP(2)),
                      Flatten(), SoftmaxOutput(10)], "tiny")
TINY_INPUT = (3, 8, 8)


def kink_margin(net, x) -> float:
    """Smallest distance of any ReLU input from 0 or any max-pool winner from its runner-up.

    Finite differences are only meaningful when this is well above the step.
    """
    margin = np.inf
    for layer in net.layers:
        if isinstance(layer, ReluLayer):
            margin = min(margin, float(np.abs(x).min()))
        elif isinstance(layer, PoolLayer) and layer.op.kind is P.PoolKind.MAX:
            top2 = np.sort(blocks(x, layer.op.window), axis=-1)[..., -2:]
            margin = min(margin, float((top2[..., 1] - top2[..., 0]).min()))
        x = layer.forward(x, train=True)
    return margin


def check_network(trials=20, seed=5, margin=1e-3) -> CheckResult:
    """Whole-network parameter gradients of the mean cross-entropy.

    Draws that put a ReLU input or a max-pool decision within ``margin`` of
    its kink are redrawn.
    """
    worst = 0.0
    for t in range(trials):
        for attempt in range(100):
            rng = np.random.default_rng([seed, t, attempt])
            net = build(TINY_SPEC, seed=int(rng.integers(1 << 31)), input_shape=TINY_INPUT)
            for _, _, p in net.parameters():
                p += 0.1 * rng.standard_normal(p.shape)
            x = rng.standard_normal((4,) + TINY_INPUT)
            y = rng.integers(0, 10, 4)
            if kink_margin(net, x) > margin:
                break

        def loss():
            return softmax_cross_entropy(net.forward(x, "train"), y)[0]

        _, g = softmax_cross_entropy(net.forward(x, "train"), y)
        net.backward(g)
        analytic = {key: gr.copy() for _, key, gr in net.grads()}
        for _, key, p in net.parameters():
            worst = max(worst, rel_error(analytic[key], numeric_grad(loss, p)))
    return CheckResult("network(tiny)", worst, NETWORK_TOL, trials)


ACCEPTANCE_STACKS = {
    "MP2,MP2": [P.MP(2), P.MP(2)],
    "AP3,MP2": [P.AP(3), P.MP(2)],
    "MP3,AP2": [P.MP(3), P.AP(2)],
    "AP2,MP3": [P.AP(2), P.MP(3)],
}


def run_all(trials: int = 20) -> list[CheckResult]:
    results = [check_conv(trials), check_fc(trials), check_batchnorm(trials),
               check_softmax_ce(trials)]
    results += [check_stack(s, trials) for s in ACCEPTANCE_STACKS.values()]
    results.append(check_network(trials))
    return results
