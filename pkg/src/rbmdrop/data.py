"""IDX-format image datasets and deterministic mini-batch scheduling.

The IDX container is the big-endian format the classic digit benchmarks
ship in: two zero bytes, a type code, a dimension count, one u32 per
dimension, then the raw payload.  Image files are 3-D unsigned bytes
(magic 0x00000803), label files 1-D (0x00000801); gzip-compressed files
are handled transparently.
"""

import gzip
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rbmdrop.errors import DataFormatError
from rbmdrop.rng import STREAM_SHUFFLE, substream

MAGIC_IMAGES = 0x00000803  # 3-D stack of unsigned-byte images
MAGIC_LABELS = 0x00000801  # 1-D vector of unsigned-byte labels

_MAGIC_NDIM = {MAGIC_IMAGES: 3, MAGIC_LABELS: 1}

# conventional file names, tried in order, each also with a .gz suffix
_TRAIN_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
_TEST_NAMES = (
    "t10k-images-idx3-ubyte",
    "t10k-images.idx3-ubyte",
    "test-images-idx3-ubyte",
)

DATA_ROOT_ENV = "RBMDROP_DATA"


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode one IDX payload into a uint8 array of its native shape.

    Only the two magics this package consumes are accepted: 3-D image
    stacks and 1-D label vectors, both with unsigned-byte elements.
    """
    if len(raw) < 4:
        raise DataFormatError("IDX data shorter than its 4-byte magic")
    magic = int.from_bytes(raw[:4], "big")
    if magic not in _MAGIC_NDIM:
        raise DataFormatError(
            f"unsupported IDX magic 0x{magic:08x} (expected 0x{MAGIC_IMAGES:08x} "
            f"for images or 0x{MAGIC_LABELS:08x} for labels)"
        )
    ndim = _MAGIC_NDIM[magic]
    header_size = 4 + 4 * ndim
    if len(raw) < header_size:
        raise DataFormatError("IDX data truncated inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_size])
    expected = math.prod(dims)
    payload = len(raw) - header_size
    if payload != expected:
        raise DataFormatError(
            f"IDX payload holds {payload} bytes but dimensions {dims} "
            f"require {expected}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_size).reshape(dims).copy()


def _read_maybe_gzip(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def load_idx(path) -> np.ndarray:
    """parse_idx over a file, decompressing gzip transparently."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: no such file")
    try:
        return parse_idx(_read_maybe_gzip(path))
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


@dataclass
class Dataset:
    """Train/test image stacks scaled to [0, 1]."""

    name: str
    train: np.ndarray  # (N, H, W) float64
    test: np.ndarray   # (T, H, W) float64

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.train.shape[1], self.train.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.train.shape[1] * self.train.shape[2]

    @property
    def train_flat(self) -> np.ndarray:
        return self.train.reshape(self.train.shape[0], -1)

    @property
    def test_flat(self) -> np.ndarray:
        return self.test.reshape(self.test.shape[0], -1)


def _to_unit_interval(images: np.ndarray, origin: str) -> np.ndarray:
    if images.ndim != 3:
        raise DataFormatError(
            f"{origin}: expected a 3-D image stack, got shape {images.shape}"
        )
    return images.astype(np.float64) / 255.0


def _find_file(directory: Path, names) -> Path:
    for name in names:
        for candidate in (directory / name, directory / (name + ".gz")):
            if candidate.is_file():
                return candidate
    raise DataFormatError(
        f"{directory}: none of {', '.join(names)} found (plain or .gz)"
    )


def resolve_dataset_dir(source: str, data_root=None) -> Path:
    """Directory holding the IDX files for `source` (a path or a name).

    A `source` that is an existing directory wins; otherwise it is taken
    as a dataset name under `data_root` (default: $RBMDROP_DATA or ./data).
    """
    as_path = Path(source)
    if as_path.is_dir():
        return as_path
    root = Path(data_root) if data_root else Path(os.environ.get(DATA_ROOT_ENV, "data"))
    named = root / source
    if named.is_dir():
        return named
    raise DataFormatError(
        f"dataset {source!r} not found: neither a directory nor present "
        f"under {root}"
    )


def load_dataset(source: str, data_root=None, binarize: bool = False) -> Dataset:
    """Load the train/test image stacks for a dataset name or directory.

    Pixels are scaled to [0, 1]; `binarize` thresholds them at 0.5 for
    strictly binary visible units.
    """
    directory = resolve_dataset_dir(source, data_root)
    train_path = _find_file(directory, _TRAIN_NAMES)
    test_path = _find_file(directory, _TEST_NAMES)
    train = _to_unit_interval(load_idx(train_path), str(train_path))
    test = _to_unit_interval(load_idx(test_path), str(test_path))
    if train.shape[1:] != test.shape[1:]:
        raise DataFormatError(
            f"train images {train.shape[1:]} and test images {test.shape[1:]} "
            f"disagree on size"
        )
    if binarize:
        train = (train >= 0.5).astype(np.float64)
        test = (test >= 0.5).astype(np.float64)
    return Dataset(Path(source).name, train, test)


@dataclass
class BatchPlan:
    """One epoch's pass over the data: a permutation cut into batches."""

    permutation: np.ndarray
    batch_size: int

    def __len__(self) -> int:
        return -(-self.permutation.size // self.batch_size)

    def __iter__(self):
        for start in range(0, self.permutation.size, self.batch_size):
            yield self.permutation[start : start + self.batch_size]


def batches(n_examples: int, batch_size: int, seed: int, epoch: int) -> BatchPlan:
    """Shuffled index batches for one epoch, deterministic in (seed, epoch).

    The shuffle stream is independent of every other randomness consumer,
    so two runs differing only in regularizer visit examples in the same
    order.  The trailing short batch is kept.
    """
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    permutation = substream(seed, STREAM_SHUFFLE, epoch).permutation(n_examples)
    return BatchPlan(permutation, batch_size)
