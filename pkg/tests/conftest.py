"""Shared fixtures: synthetic IDX datasets and the acceptance summary hook."""

import struct

import numpy as np
import pytest


def idx_bytes(array: np.ndarray) -> bytes:
    """Serialize a uint8 array as IDX (3-D images or 1-D labels)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = {3: 0x00000803, 1: 0x00000801}[array.ndim]
    header = struct.pack(">I", magic) + struct.pack(
        f">{array.ndim}I", *array.shape
    )
    return header + array.tobytes()


def blob_images(count: int, side: int, rng: np.random.Generator) -> np.ndarray:
    """Byte images with one bright square on a dark field, easy to learn."""
    images = np.zeros((count, side, side), dtype=np.uint8)
    size = max(side // 3, 2)
    for i in range(count):
        r, c = rng.integers(0, side - size, size=2)
        images[i, r : r + size, c : c + size] = rng.integers(160, 256)
    return images


def write_dataset_dir(directory, n_train=96, n_test=32, side=14, seed=1234):
    """Materialize a small train/test IDX dataset under `directory`."""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    train = blob_images(n_train, side, rng)
    test = blob_images(n_test, side, rng)
    (directory / "train-images-idx3-ubyte").write_bytes(idx_bytes(train))
    (directory / "t10k-images-idx3-ubyte").write_bytes(idx_bytes(test))
    return directory


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """A session-wide toy dataset directory (96 train / 32 test, 14x14)."""
    return write_dataset_dir(tmp_path_factory.mktemp("toyset") / "toy")


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collector for one PASS/FAIL/SKIP line per acceptance criterion."""
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
