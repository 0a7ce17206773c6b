"""Train A-LeNet5-a for a few epochs.

Uses CIFAR-10 from $POOLROUTES_CIFAR10 when it is set; otherwise falls back
to a synthetic ten-class problem (class templates plus noise) so the loop
can be watched end to end without the dataset.
"""
import logging
import os

import numpy as np

from poolroutes.arch import build_spec
from poolroutes.data import DATA_ENV, Dataset, load_cifar10
from poolroutes.experiments import default_config, train
from poolroutes.network import param_count

logging.basicConfig(level=logging.INFO, format="%(message)s")


def synthetic(n, seed):
    rng = np.random.default_rng(seed)
    protos = np.random.default_rng(99).uniform(-1, 1, (10, 3, 32, 32))
    y = rng.integers(0, 10, n)
    x = np.clip(protos[y] + 0.5 * rng.standard_normal((n, 3, 32, 32)), -1, 1)
    return Dataset(x.astype(np.float32), y, "synthetic")


if os.environ.get(DATA_ENV):
    train_set, test_set = load_cifar10(dtype=np.float32)
    epochs = 20
else:
    print(f"${DATA_ENV} unset: using synthetic data")
    train_set, test_set = synthetic(2000, 0), synthetic(500, 1)
    epochs = 3

spec = build_spec("A-LeNet5-a")
print(spec.name, "parameters:", param_count(spec))
cfg = default_config("A-LeNet5-a", epochs=epochs, seed=0)
report, _ = train(spec, cfg, train_set, test_set)
print(f"untrained accuracy {report.initial_test_acc:.3f} -> {report.final_test_acc:.3f}")
