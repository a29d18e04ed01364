"""Binary PGM (P5) image export for filters and reconstruction sheets.

PGM is deliberately minimal: it needs no imaging dependency, diffs
byte-for-byte, and every common viewer opens it.
"""

from pathlib import Path

import numpy as np

from rbmdrop.errors import DataFormatError


def write_pgm(path, image: np.ndarray) -> None:
    """Write a grayscale image; float input is taken as [0, 1] and scaled."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    if image.dtype != np.uint8:
        image = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = image.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM back as (H, W) uint8."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated PGM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError:
            raise DataFormatError(f"{path}: malformed PGM header") from None
    w, h, maxval = fields
    if maxval != 255:
        raise DataFormatError(f"{path}: unsupported max value {maxval}")
    pos += 1  # the single whitespace byte after maxval
    data = raw[pos : pos + w * h]
    if len(data) != w * h:
        raise DataFormatError(f"{path}: expected {w * h} pixels, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def _tile_grid(tiles: np.ndarray, columns: int, pad: int = 0, pad_value: float = 0.0):
    """(K, H, W) tiles -> one image, row-major, `pad` pixels of separator."""
    k, h, w = tiles.shape
    rows = -(-k // columns)
    grid = np.full(
        (rows * h + (rows + 1) * pad, columns * w + (columns + 1) * pad), pad_value
    )
    for idx in range(k):
        r, c = divmod(idx, columns)
        top = pad + r * (h + pad)
        left = pad + c * (w + pad)
        grid[top : top + h, left : left + w] = tiles[idx]
    return grid


def export_weight_filters(
    weights: np.ndarray,
    image_shape: tuple[int, int],
    path,
    grid: tuple[int, int] = (10, 10),
) -> int:
    """Render hidden-unit filters (weight columns) as one tiled PGM sheet.

    The first rows*cols filters are tiled edge to edge, so the output is
    exactly (rows*H) x (cols*W) pixels.  Each filter is min-max
    normalized on its own so structure is visible regardless of scale;
    constant filters render mid-gray.  Returns the number of filters
    drawn.
    """
    weights = np.asarray(weights, dtype=np.float64)
    h, w = image_shape
    if weights.shape[0] != h * w:
        raise ValueError(
            f"{weights.shape[0]} weight rows do not fill a {h}x{w} image"
        )
    rows, cols = grid
    count = rows * cols
    if not 1 <= count <= weights.shape[1]:
        raise ValueError(
            f"grid {rows}x{cols} needs {count} filters, model has {weights.shape[1]}"
        )
    tiles = weights[:, :count].T.reshape(count, h, w)
    lo = tiles.min(axis=(1, 2), keepdims=True)
    hi = tiles.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    flat = span == 0
    span[flat] = 1.0
    tiles = (tiles - lo) / span
    tiles[flat[:, 0, 0]] = 0.5
    write_pgm(path, _tile_grid(tiles, cols))
    return count


def export_reconstructions(
    originals: np.ndarray,
    reconstructions: np.ndarray,
    image_shape: tuple[int, int],
    out_dir,
    pairs_per_sheet: int = 16,
) -> list:
    """Write sheets pairing each original with its reconstruction.

    Every tile is [original | reconstruction] side by side; sheets hold
    up to `pairs_per_sheet` tiles in four columns.  Returns the written
    paths in order.
    """
    h, w = image_shape
    originals = np.asarray(originals, dtype=np.float64).reshape(-1, h, w)
    reconstructions = np.asarray(reconstructions, dtype=np.float64).reshape(-1, h, w)
    if originals.shape != reconstructions.shape:
        raise ValueError("originals and reconstructions differ in count")
    pairs = np.concatenate([originals, reconstructions], axis=2)  # (N, h, 2w)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sheet_idx, start in enumerate(range(0, pairs.shape[0], pairs_per_sheet)):
        sheet = pairs[start : start + pairs_per_sheet]
        path = out_dir / f"reconstructions_{sheet_idx:03d}.pgm"
        write_pgm(path, _tile_grid(sheet, columns=4, pad=1))
        paths.append(path)
    return paths
