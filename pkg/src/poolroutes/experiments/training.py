"""Mini-batch training loop with per-epoch evaluation."""
from __future__ import annotations

import logging
import time
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from ..arch import build_spec
from ..data import AugmentPolicy, Dataset, augment_batch
from ..layers import softmax_cross_entropy
from ..network import ArchSpec, Network, build
from ..optim import SGD, HyperSet, hyper_table

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    hypers: HyperSet
    epochs: int | None = None
    batch_size: int | None = None
    seed: int = 0
    deterministic: bool = True
    dtype: str = "float32"
    augment: bool = True
    nesterov: str = "lookahead"
    l2_exclude: tuple = ()
    init: str = "normal"
    eval_batch: int = 500

    def __post_init__(self):
        if self.epochs is None:
            self.epochs = self.hypers.epochs
        if self.batch_size is None:
            self.batch_size = self.hypers.batch_size
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return {
            "hypers": self.hypers.to_dict(), "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
            "deterministic": self.deterministic, "dtype": self.dtype,
            "augment": self.augment, "nesterov": self.nesterov,
            "l2_exclude": list(self.l2_exclude), "init": self.init,
        }


@dataclass
class TrainReport:
    arch: str
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    initial_test_acc: float | None = None
    first_batch_loss: float | None = None
    last_batch_loss: float | None = None
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def final_test_acc(self) -> float | None:
        if self.test_acc:
            return self.test_acc[-1]
        return self.initial_test_acc

    def to_dict(self) -> dict:
        return {
            "arch": self.arch, "train_loss": self.train_loss, "train_acc": self.train_acc,
            "test_acc": self.test_acc, "initial_test_acc": self.initial_test_acc,
            "final_test_acc": self.final_test_acc, "first_batch_loss": self.first_batch_loss,
            "last_batch_loss": self.last_batch_loss, "wall_time": self.wall_time,
            "config": self.config,
        }


def _thread_guard(deterministic: bool):
    if not deterministic:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=1)


def evaluate(net: Network, data: Dataset, batch: int = 500) -> float:
    correct = 0
    dtype = net.layers[0].params["weight"].dtype if net.layers[0].params else np.float64
    for s in range(0, len(data), batch):
        x = data.images[s:s + batch].astype(dtype, copy=False)
        logits = net.forward(x, mode="eval")
        correct += int(np.count_nonzero(logits.argmax(axis=1) == data.labels[s:s + batch]))
    return correct / max(len(data), 1)


def train(arch, config: TrainConfig, train_data: Dataset, test_data: Dataset | None = None,
          on_epoch=None) -> tuple[TrainReport, Network]:
    """Train ``arch`` (name or ArchSpec) and evaluate on ``test_data`` after each epoch.

    Epochs are counted from 0; the learning rate used in epoch ``e`` is
    ``lr_at_epoch(schedule, e)`` for each parameter group.
    """
    spec = arch if isinstance(arch, ArchSpec) else build_spec(arch)
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    report = TrainReport(spec.name, config=config.to_dict())
    t0 = time.perf_counter()
    with _thread_guard(config.deterministic):
        net = build(spec, seed=config.seed, dtype=dtype, init=config.init)
        opt = SGD(dict(config.hypers.groups), variant=config.nesterov,
                  l2_exclude=tuple(config.l2_exclude))
        if test_data is not None:
            report.initial_test_acc = evaluate(net, test_data, config.eval_batch)
        policy = AugmentPolicy()
        n = len(train_data)
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            losses, correct = [], 0
            for s in range(0, n, config.batch_size):
                idx = order[s:s + config.batch_size]
                x = train_data.images[idx]
                if config.augment:
                    x = augment_batch(x, policy, rng)
                x = x.astype(dtype, copy=False)
                y = train_data.labels[idx]
                logits = net.forward(x, mode="train")
                loss, grad = softmax_cross_entropy(logits.astype(np.float64), y)
                if not np.isfinite(loss):
                    report.wall_time = time.perf_counter() - t0
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {s}",
                                          report)
                net.backward(grad.astype(dtype))
                opt.step(net.parameters(), net.grads(), epoch)
                losses.append(loss)
                correct += int(np.count_nonzero(logits.argmax(axis=1) == y))
                if report.first_batch_loss is None:
                    report.first_batch_loss = loss
            report.last_batch_loss = losses[-1] if losses else None
            report.train_loss.append(float(np.mean(losses)))
            report.train_acc.append(correct / n)
            if test_data is not None:
                report.test_acc.append(evaluate(net, test_data, config.eval_batch))
            log.info("epoch %d loss %.4f train_acc %.4f test_acc %s", epoch,
                     report.train_loss[-1], report.train_acc[-1],
                     report.test_acc[-1] if report.test_acc else None)
            if on_epoch is not None:
                on_epoch(epoch, report)
    report.wall_time = time.perf_counter() - t0
    return report, net


def default_config(arch_name: str, **overrides) -> TrainConfig:
    """Config seeded from the published table for ``arch_name`` (LeNet5 borrows A-LeNet5-a)."""
    key = {"lenet5": "A-LeNet5-a", "lenet5-single-mp4": "A-LeNet5-a",
           "lenet5-single-ap4": "A-LeNet5-a", "vgg8": "A-VGG8",
           "vgg16": "A-VGG16"}.get(arch_name.lower(), arch_name)
    return TrainConfig(hypers=hyper_table(key), **overrides)
