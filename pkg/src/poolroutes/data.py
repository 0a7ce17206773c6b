"""CIFAR-10 binary loading, [-1, 1] scaling, augmentation and Gaussian inputs."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_BYTES = 1 + 3 * 32 * 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
DATA_ENV = "POOLROUTES_CIFAR10"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray   # (N, 3, 32, 32), values in [-1, 1]
    labels: np.ndarray   # (N,) int64 in [0, 9]
    split: str

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.split)


def preprocess(raw, dtype=np.float64):
    """Map pixel bytes 0..255 onto [-1, 1]: ``byte / 255 * 2 - 1``."""
    return (np.asarray(raw, dtype=dtype) / 255.0) * 2.0 - 1.0


def read_cifar_bin(path, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing CIFAR-10 file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DatasetError(f"{path}: size {raw.size} is not a whole number of "
                           f"{RECORD_BYTES}-byte records (truncated record)")
    rec = raw.reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise DatasetError(f"{path}: record {bad[0]} has corrupt label byte {labels[bad[0]]}")
    images = preprocess(rec[:, 1:].reshape(-1, 3, 32, 32), dtype)
    return images, labels


def resolve_data_dir(directory=None) -> Path:
    directory = directory or os.environ.get(DATA_ENV)
    if not directory:
        raise DatasetError(f"no CIFAR-10 directory given and ${DATA_ENV} is unset")
    return Path(directory)


def load_cifar10(directory=None, dtype=np.float64) -> tuple[Dataset, Dataset]:
    """Load the binary-format CIFAR-10 train and test splits from ``directory``."""
    d = resolve_data_dir(directory)
    parts = [read_cifar_bin(d / f, dtype) for f in TRAIN_FILES]
    train = Dataset(np.concatenate([p[0] for p in parts]),
                    np.concatenate([p[1] for p in parts]), "train")
    test = Dataset(*read_cifar_bin(d / TEST_FILE, dtype), "test")
    return train, test


def validation_split(train: Dataset, size: int = 10_000, seed: int = 0):
    """Hold out ``size`` random training examples; returns ``(train, validation)``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(train))
    val = train.subset(np.sort(perm[:size]))
    val.split = "validation"
    return train.subset(np.sort(perm[size:])), val


@dataclass(frozen=True)
class AugmentPolicy:
    flip_prob: float = 0.5
    max_shift: int = 4
    fill: float = 0.0
    mode: str = "constant"   # or "edge" / "reflect" for the uncovered border

    def __post_init__(self):
        if self.mode not in _PAD_MODES:
            raise ValueError(f"unknown translation mode {self.mode!r}")


_PAD_MODES = ("constant", "edge", "reflect")


def _pad(x, s, fill, mode):
    width = [(0, 0)] * (x.ndim - 2) + [(s, s), (s, s)]
    if mode == "constant":
        return np.pad(x, width, constant_values=fill)
    return np.pad(x, width, mode=mode)


def translate(image: np.ndarray, dx: int, dy: int, fill: float = 0.0,
              mode: str = "constant") -> np.ndarray:
    """Crop-window translation: ``out[r, c] = image[r + dy, c + dx]``.

    Positions that fall outside the source get ``fill`` (or edge / mirror
    values with the other modes); a positive ``dx`` therefore blanks the
    rightmost ``dx`` columns.
    """
    h, w = image.shape[-2:]
    s = max(abs(dx), abs(dy))
    padded = _pad(image, s, fill, mode)
    return padded[..., s + dy:s + dy + h, s + dx:s + dx + w].copy()


def hflip(image: np.ndarray) -> np.ndarray:
    return image[..., ::-1].copy()


def augment(image: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Random horizontal flip, then a random translation of up to ``max_shift`` pixels."""
    if rng.random() < policy.flip_prob:
        image = hflip(image)
    dx, dy = rng.integers(-policy.max_shift, policy.max_shift + 1, size=2)
    return translate(image, int(dx), int(dy), policy.fill, policy.mode)


def augment_batch(images: np.ndarray, policy: AugmentPolicy,
                  rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`augment` over an (n, c, h, w) batch."""
    n, _, h, w = images.shape
    flips = rng.random(n) < policy.flip_prob
    shifts = rng.integers(-policy.max_shift, policy.max_shift + 1, size=(n, 2))
    src = np.where(flips[:, None, None, None], images[..., ::-1], images)
    s = policy.max_shift
    padded = _pad(src, s, policy.fill, policy.mode)
    out = np.empty_like(images)
    for i in range(n):
        dx, dy = shifts[i]
        out[i] = padded[i, :, s + dy:s + dy + h, s + dx:s + dx + w]
    return out


def gaussian_inputs(extent: int, channels: int = 1, count: int = 1, seed: int = 0,
                    dtype=np.float64):
    """Yield ``count`` (1, channels, extent, extent) standard-normal tensors."""
    if extent < 1:
        raise ValueError("extent must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield rng.standard_normal((1, channels, extent, extent)).astype(dtype, copy=False)


# Raw tensor cache: magic, dtype code, ndim, dims (all little-endian), then the values.
_MAGIC = b"PRT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {v: k for k, v in _DTYPES.items()}


def dump_tensor(path, array: np.ndarray):
    array = np.asarray(array)
    dt = array.dtype.newbyteorder("<") if array.dtype.byteorder not in ("|", "<") else array.dtype
    if dt not in _CODES:
        raise ValueError(f"unsupported dtype {array.dtype}")
    header = _MAGIC + struct.pack("<BB", _CODES[dt], array.ndim)
    header += struct.pack(f"<{array.ndim}q", *array.shape)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(array, dtype=dt).tobytes())
    os.replace(tmp, path)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise DatasetError(f"{path}: bad magic")
        code, ndim = struct.unpack("<BB", f.read(2))
        shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim))
        body = f.read()
    dt = _DTYPES[code]
    if len(body) != dt.itemsize * int(np.prod(shape)):
        raise DatasetError(f"{path}: body length does not match header shape {shape}")
    return np.frombuffer(body, dtype=dt).reshape(shape).copy()
