"""PGM writing/reading and the filter / reconstruction sheet exporters."""

import numpy as np
import pytest

from rbmdrop.errors import DataFormatError
from rbmdrop.export import (
    export_reconstructions,
    export_weight_filters,
    read_pgm,
    write_pgm,
)


# -------------------------------------------------------------------- pgm


def test_pgm_roundtrip_uint8(tmp_path):
    image = np.arange(35, dtype=np.uint8).reshape(5, 7)
    path = tmp_path / "gray.pgm"
    write_pgm(path, image)
    np.testing.assert_array_equal(read_pgm(path), image)


def test_pgm_header_bytes(tmp_path):
    path = tmp_path / "tiny.pgm"
    write_pgm(path, np.zeros((2, 3), dtype=np.uint8))
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    assert len(raw) == len(b"P5\n3 2\n255\n") + 6


def test_pgm_float_scaling(tmp_path):
    path = tmp_path / "float.pgm"
    write_pgm(path, np.array([[0.0, 0.5, 1.0]]))
    np.testing.assert_array_equal(read_pgm(path), [[0, 128, 255]])


def test_pgm_clips_out_of_range_floats(tmp_path):
    path = tmp_path / "clip.pgm"
    write_pgm(path, np.array([[-0.5, 1.5]]))
    np.testing.assert_array_equal(read_pgm(path), [[0, 255]])


def test_pgm_rejects_non_2d():
    with pytest.raises(ValueError):
        write_pgm("unused.pgm", np.zeros(5))


def test_read_pgm_handles_comments(tmp_path):
    path = tmp_path / "comment.pgm"
    path.write_bytes(b"P5\n# a comment line\n2 1\n255\n\x07\x09")
    np.testing.assert_array_equal(read_pgm(path), [[7, 9]])


def test_read_pgm_rejects_wrong_signature(tmp_path):
    path = tmp_path / "p2.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(DataFormatError, match="P5"):
        read_pgm(path)


def test_read_pgm_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "hdr.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(DataFormatError, match="max value"):
        read_pgm(path)


def test_read_pgm_rejects_short_payload(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x00\x00")
    with pytest.raises(DataFormatError, match="expected 4 pixels"):
        read_pgm(path)


# ---------------------------------------------------------------- filters


def test_filter_sheet_dimensions_are_exact(tmp_path):
    rng = np.random.default_rng(0)
    weights = rng.normal(size=(28 * 28, 12))
    path = tmp_path / "filters.pgm"
    drawn = export_weight_filters(weights, (28, 28), path, grid=(2, 5))
    assert drawn == 10
    sheet = read_pgm(path)
    assert sheet.shape == (2 * 28, 5 * 28)


def test_filter_sheet_zero_weights_render_mid_gray(tmp_path):
    path = tmp_path / "flat.pgm"
    export_weight_filters(np.zeros((16, 4)), (4, 4), path, grid=(2, 2))
    sheet = read_pgm(path)
    np.testing.assert_array_equal(sheet, np.full((8, 8), 128, dtype=np.uint8))


def test_filter_normalization_spans_full_range(tmp_path):
    weights = np.linspace(-1.0, 1.0, 16)[:, None]
    path = tmp_path / "span.pgm"
    export_weight_filters(weights, (4, 4), path, grid=(1, 1))
    sheet = read_pgm(path)
    assert sheet.min() == 0
    assert sheet.max() == 255


def test_filter_tiles_are_column_reshapes(tmp_path):
    # one filter whose image is recognizable after the min-max normalization
    col = np.zeros(16)
    col[3] = 2.0
    col[12] = -2.0
    weights = np.stack([col, np.zeros(16)], axis=1)
    path = tmp_path / "two.pgm"
    export_weight_filters(weights, (4, 4), path, grid=(1, 2))
    sheet = read_pgm(path)
    left = sheet[:, :4]
    assert left[0, 3] == 255 and left[3, 0] == 0
    np.testing.assert_array_equal(sheet[:, 4:], np.full((4, 4), 128))


def test_filter_grid_larger_than_model_is_rejected(tmp_path):
    with pytest.raises(ValueError, match="grid"):
        export_weight_filters(np.zeros((16, 4)), (4, 4), tmp_path / "x.pgm", grid=(5, 1))


def test_filter_weight_rows_must_fill_the_image(tmp_path):
    with pytest.raises(ValueError, match="weight rows"):
        export_weight_filters(np.zeros((10, 4)), (4, 4), tmp_path / "x.pgm")


# -------------------------------------------------------- reconstructions


def test_reconstruction_sheet_count(tmp_path):
    rng = np.random.default_rng(1)
    originals = rng.random((20, 6, 6))
    recons = rng.random((20, 6, 6))
    paths = export_reconstructions(originals, recons, (6, 6), tmp_path)
    assert len(paths) == 2  # ceil(20 / 16)
    assert [p.name for p in paths] == [
        "reconstructions_000.pgm",
        "reconstructions_001.pgm",
    ]
    for p in paths:
        read_pgm(p)  # parses back as valid PGM


def test_reconstruction_sheet_embeds_original_exactly(tmp_path):
    # pixel values that are exact multiples of 1/255 survive the u8 roundtrip
    original = (np.arange(16, dtype=np.float64) / 255.0).reshape(1, 4, 4)
    recon = np.full((1, 4, 4), 0.5)
    (path,) = export_reconstructions(original, recon, (4, 4), tmp_path)
    sheet = read_pgm(path)
    # pad=1 border, then the original occupies the first 4x4 block
    np.testing.assert_array_equal(
        sheet[1:5, 1:5], np.arange(16, dtype=np.uint8).reshape(4, 4)
    )
    np.testing.assert_array_equal(sheet[1:5, 5:9], np.full((4, 4), 128))


def test_reconstruction_accepts_flat_input(tmp_path):
    originals = np.zeros((3, 25))
    recons = np.ones((3, 25))
    (path,) = export_reconstructions(originals, recons, (5, 5), tmp_path / "nested")
    assert path.is_file()


def test_reconstruction_count_mismatch(tmp_path):
    with pytest.raises(ValueError, match="count"):
        export_reconstructions(np.zeros((2, 4, 4)), np.zeros((3, 4, 4)), (4, 4), tmp_path)
