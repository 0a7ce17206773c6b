import numpy as np
import pytest

from poolroutes.data import RECORD_BYTES, TEST_FILE, TRAIN_FILES


def write_cifar_records(path, labels, rng):
    rec = rng.integers(0, 256, size=(len(labels), RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = labels
    rec.tofile(path)
    return rec


@pytest.fixture
def cifar_dir(tmp_path):
    """A miniature CIFAR-10 binary directory (12 train records per batch file, 10 test)."""
    rng = np.random.default_rng(0)
    for name in TRAIN_FILES:
        write_cifar_records(tmp_path / name, rng.integers(0, 10, 12), rng)
    write_cifar_records(tmp_path / TEST_FILE, np.arange(10), rng)
    return tmp_path


def separable_dataset(n, seed=0, side=32):
    """Images whose label is written into a per-class mean pattern plus noise."""
    from poolroutes.data import Dataset

    rng = np.random.default_rng(seed)
    protos = np.random.default_rng(1234).uniform(-1, 1, size=(10, 3, side, side))
    labels = rng.integers(0, 10, n)
    images = np.clip(protos[labels] + 0.3 * rng.standard_normal((n, 3, side, side)), -1, 1)
    return Dataset(images, labels, "synthetic")


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
