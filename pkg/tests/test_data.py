"""IDX parsing, dataset loading/resolution, and batch scheduling."""

import gzip

import numpy as np
import pytest

from conftest import idx_bytes, write_dataset_dir
from rbmdrop import DataFormatError, batches, load_dataset, parse_idx
from rbmdrop.data import BatchPlan, load_idx, resolve_dataset_dir


# -------------------------------------------------------------- parse_idx


def test_parse_idx_images_roundtrip():
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    decoded = parse_idx(idx_bytes(images))
    np.testing.assert_array_equal(decoded, images)
    assert decoded.dtype == np.uint8


def test_parse_idx_labels_roundtrip():
    labels = np.array([0, 1, 9, 255], dtype=np.uint8)
    np.testing.assert_array_equal(parse_idx(idx_bytes(labels)), labels)


def test_parse_idx_minimal_hand_built_file():
    raw = bytes(
        [0, 0, 8, 3]          # magic: u8 elements, 3 dimensions
        + [0, 0, 0, 2] * 3    # dims: 2 x 2 x 2
        + list(range(8))      # payload
    )
    decoded = parse_idx(raw)
    assert decoded.shape == (2, 2, 2)
    assert decoded[1, 1, 1] == 7


def test_parse_idx_result_is_writable():
    images = np.zeros((1, 2, 2), dtype=np.uint8)
    decoded = parse_idx(idx_bytes(images))
    decoded[0, 0, 0] = 9
    assert decoded[0, 0, 0] == 9


def test_parse_idx_rejects_unsupported_magic():
    raw = bytes([0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 42])
    with pytest.raises(DataFormatError, match="unsupported IDX magic 0x00000802"):
        parse_idx(raw)


def test_parse_idx_rejects_short_magic():
    with pytest.raises(DataFormatError, match="magic"):
        parse_idx(b"\x00\x00")


def test_parse_idx_rejects_truncated_dimension_header():
    with pytest.raises(DataFormatError, match="dimension header"):
        parse_idx(bytes([0, 0, 8, 3, 0, 0, 0, 1]))


def test_parse_idx_rejects_payload_size_mismatch():
    images = np.zeros((2, 3, 3), dtype=np.uint8)
    raw = idx_bytes(images)
    with pytest.raises(DataFormatError, match="17 bytes.*require 18"):
        parse_idx(raw[:-1])
    with pytest.raises(DataFormatError, match="19 bytes.*require 18"):
        parse_idx(raw + b"\x00")


# --------------------------------------------------------------- load_idx


def test_load_idx_plain_and_gzip(tmp_path):
    images = np.arange(18, dtype=np.uint8).reshape(2, 3, 3)
    plain = tmp_path / "imgs"
    plain.write_bytes(idx_bytes(images))
    packed = tmp_path / "imgs.gz"
    packed.write_bytes(gzip.compress(idx_bytes(images)))
    np.testing.assert_array_equal(load_idx(plain), images)
    np.testing.assert_array_equal(load_idx(packed), images)


def test_load_idx_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="no such file"):
        load_idx(tmp_path / "absent")


def test_load_idx_corrupt_gzip(tmp_path):
    path = tmp_path / "bad.gz"
    path.write_bytes(b"\x1f\x8b" + b"\x00" * 10)
    with pytest.raises(DataFormatError, match="gzip"):
        load_idx(path)


def test_load_idx_error_names_the_file(tmp_path):
    path = tmp_path / "named"
    path.write_bytes(b"\x00\x00\x08\x02")
    with pytest.raises(DataFormatError, match="named"):
        load_idx(path)


# ----------------------------------------------------------- load_dataset


def test_load_dataset_scales_to_unit_interval(tmp_path):
    write_dataset_dir(tmp_path, n_train=8, n_test=4, side=12)
    ds = load_dataset(str(tmp_path))
    assert ds.train.shape == (8, 12, 12)
    assert ds.test.shape == (4, 12, 12)
    assert ds.train.dtype == np.float64
    assert ds.train.min() >= 0.0 and ds.train.max() <= 1.0
    assert ds.image_shape == (12, 12)
    assert ds.n_pixels == 144
    assert ds.train_flat.shape == (8, 144)


def test_load_dataset_preserves_extreme_pixels(tmp_path):
    images = np.zeros((2, 14, 14), dtype=np.uint8)
    images[0, 0, 0] = 255
    (tmp_path / "train-images-idx3-ubyte").write_bytes(idx_bytes(images))
    (tmp_path / "t10k-images-idx3-ubyte").write_bytes(idx_bytes(images))
    ds = load_dataset(str(tmp_path))
    assert ds.train[0, 0, 0] == 1.0
    assert ds.train[0, 1, 1] == 0.0


def test_load_dataset_binarize(tmp_path):
    images = np.array([[[100, 200], [127, 128]]], dtype=np.uint8)
    # pad to a 2x2 image stack for both splits
    (tmp_path / "train-images-idx3-ubyte").write_bytes(idx_bytes(images))
    (tmp_path / "t10k-images-idx3-ubyte").write_bytes(idx_bytes(images))
    ds = load_dataset(str(tmp_path), binarize=True)
    np.testing.assert_array_equal(ds.train[0], [[0.0, 1.0], [0.0, 1.0]])
    assert set(np.unique(ds.train)) <= {0.0, 1.0}


def test_load_dataset_accepts_gzip_members(tmp_path):
    images = np.zeros((3, 10, 10), dtype=np.uint8)
    (tmp_path / "train-images-idx3-ubyte.gz").write_bytes(gzip.compress(idx_bytes(images)))
    (tmp_path / "t10k-images-idx3-ubyte.gz").write_bytes(gzip.compress(idx_bytes(images)))
    assert load_dataset(str(tmp_path)).train.shape == (3, 10, 10)


def test_load_dataset_rejects_split_size_disagreement(tmp_path):
    (tmp_path / "train-images-idx3-ubyte").write_bytes(
        idx_bytes(np.zeros((2, 10, 10), dtype=np.uint8))
    )
    (tmp_path / "t10k-images-idx3-ubyte").write_bytes(
        idx_bytes(np.zeros((2, 12, 12), dtype=np.uint8))
    )
    with pytest.raises(DataFormatError, match="disagree"):
        load_dataset(str(tmp_path))


def test_load_dataset_missing_test_file(tmp_path):
    (tmp_path / "train-images-idx3-ubyte").write_bytes(
        idx_bytes(np.zeros((2, 10, 10), dtype=np.uint8))
    )
    with pytest.raises(DataFormatError, match="t10k"):
        load_dataset(str(tmp_path))


def test_load_dataset_name_comes_from_source(tmp_path):
    target = tmp_path / "digits"
    target.mkdir()
    write_dataset_dir(target, n_train=4, n_test=2, side=10)
    assert load_dataset(str(target)).name == "digits"


# ---------------------------------------------------- dataset resolution


def test_resolve_existing_directory_wins(tmp_path):
    assert resolve_dataset_dir(str(tmp_path)) == tmp_path


def test_resolve_by_name_under_data_root(tmp_path):
    (tmp_path / "mnist").mkdir()
    resolved = resolve_dataset_dir("mnist", data_root=str(tmp_path))
    assert resolved == tmp_path / "mnist"


def test_resolve_by_name_under_env_root(tmp_path, monkeypatch):
    (tmp_path / "fashion").mkdir()
    monkeypatch.setenv("RBMDROP_DATA", str(tmp_path))
    assert resolve_dataset_dir("fashion") == tmp_path / "fashion"


def test_resolve_explicit_root_beats_env(tmp_path, monkeypatch):
    surprise = tmp_path / "env"
    wanted = tmp_path / "arg"
    (surprise / "set").mkdir(parents=True)
    (wanted / "set").mkdir(parents=True)
    monkeypatch.setenv("RBMDROP_DATA", str(surprise))
    assert resolve_dataset_dir("set", data_root=str(wanted)) == wanted / "set"


def test_resolve_missing_dataset(tmp_path, monkeypatch):
    monkeypatch.setenv("RBMDROP_DATA", str(tmp_path))
    with pytest.raises(DataFormatError, match="not found"):
        resolve_dataset_dir("nowhere")


# ---------------------------------------------------------------- batches


def test_batches_cover_every_index_once():
    plan = batches(10, 4, seed=0, epoch=0)
    seen = np.concatenate(list(plan))
    assert sorted(seen.tolist()) == list(range(10))


def test_batches_partial_tail():
    plan = batches(10, 4, seed=1, epoch=0)
    sizes = [len(idx) for idx in plan]
    assert sizes == [4, 4, 2]
    assert len(plan) == 3


def test_batches_exact_division():
    plan = batches(12, 4, seed=2, epoch=0)
    assert [len(idx) for idx in plan] == [4, 4, 4]


def test_batches_deterministic_per_seed_and_epoch():
    a = np.concatenate(list(batches(50, 8, seed=3, epoch=2)))
    b = np.concatenate(list(batches(50, 8, seed=3, epoch=2)))
    np.testing.assert_array_equal(a, b)


def test_batches_vary_across_epochs():
    orders = [
        np.concatenate(list(batches(64, 16, seed=4, epoch=e))) for e in range(3)
    ]
    assert np.any(orders[0] != orders[1])
    assert np.any(orders[1] != orders[2])


def test_batches_vary_across_seeds():
    a = np.concatenate(list(batches(64, 16, seed=5, epoch=0)))
    b = np.concatenate(list(batches(64, 16, seed=6, epoch=0)))
    assert np.any(a != b)


def test_batches_validation():
    with pytest.raises(ValueError):
        batches(0, 4, seed=0, epoch=0)
    with pytest.raises(ValueError):
        batches(4, 0, seed=0, epoch=0)


def test_batch_plan_is_reiterable():
    plan = BatchPlan(np.arange(6), 2)
    assert [list(b) for b in plan] == [list(b) for b in plan]
