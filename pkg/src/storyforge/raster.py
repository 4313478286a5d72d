"""Raster kernels: block-mean pixelization, median-cut quantization, reveal
masks, band rasters and PNG encode/decode. Everything is integer numpy math,
so equal inputs give byte-equal outputs.
"""

from __future__ import annotations

import hashlib
import io

import numpy as np
from PIL import Image

from .errors import BadCellError, BadPaletteError, DimensionMismatchError


def _require_rgb(image: np.ndarray, name: str = "image") -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"{name} must have shape (h, w, 3), got {image.shape}")
    return image


def median_cut(colors: np.ndarray, palette_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantize an (n, 3) color array to at most palette_size representatives.

    Splits the box with the widest channel range; channel ties resolve in
    R, G, B order; the partition is at the lower-median value of that channel,
    so equal colors never separate and an ample palette reproduces the input
    exactly. Returns (palette (k, 3) uint8, labels (n,)).
    """
    colors = colors.astype(np.int64)
    n = len(colors)

    def box(idx: np.ndarray) -> tuple[np.ndarray, int, int]:
        sub = colors[idx]
        ranges = sub.max(axis=0) - sub.min(axis=0)
        axis = int(np.argmax(ranges))  # first max wins: R before G before B
        return idx, int(ranges[axis]), axis

    boxes = [box(np.arange(n))]
    while len(boxes) < palette_size:
        best = max(range(len(boxes)), key=lambda bi: boxes[bi][1])
        idx, spread, axis = boxes[best]
        if spread == 0:
            break  # every box is a single color; nothing left to split
        sub = colors[idx]
        order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0], sub[:, axis]))
        ordered = idx[order]
        values = colors[ordered, axis]
        split_value = values[(len(values) - 1) // 2]
        if split_value == values[-1]:
            cut = int(np.searchsorted(values, split_value, side="left"))
        else:
            cut = int(np.searchsorted(values, split_value, side="right"))
        boxes[best : best + 1] = [box(ordered[:cut]), box(ordered[cut:])]

    palette = np.empty((len(boxes), 3), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    for bi, (idx, _, _) in enumerate(boxes):
        palette[bi] = colors[idx].sum(axis=0) // len(idx)
        labels[idx] = bi
    return palette, labels


def pixelize(image: np.ndarray, cell: int = 8, palette_size: int = 32) -> np.ndarray:
    """Block-average the image in cell x cell tiles, then median-cut the tile
    colors down to at most palette_size. Dimensions are preserved; edge tiles
    may be smaller; tile means are floor(sum / count) per channel.
    """
    _require_rgb(image)
    h, w = image.shape[:2]
    if cell < 1 or cell > min(h, w):
        raise BadCellError(f"cell must be in 1..{min(h, w)} for a {w}x{h} image, got {cell}")
    if palette_size < 1:
        raise BadPaletteError(f"palette_size must be >= 1, got {palette_size}")

    rows = np.arange(0, h, cell)
    cols = np.arange(0, w, cell)
    row_sizes = np.diff(np.append(rows, h))
    col_sizes = np.diff(np.append(cols, w))
    sums = np.add.reduceat(np.add.reduceat(image.astype(np.int64), rows, axis=0), cols, axis=1)
    counts = row_sizes[:, None] * col_sizes[None, :]
    means = (sums // counts[..., None]).astype(np.uint8)

    palette, labels = median_cut(means.reshape(-1, 3), palette_size)
    tiles = palette[labels].reshape(len(rows), len(cols), 3)
    out = np.repeat(np.repeat(tiles, row_sizes, axis=0), col_sizes, axis=1)
    return np.ascontiguousarray(out, dtype=np.uint8)


def disk_reveal_mask(shape: tuple[int, int], fraction: float) -> np.ndarray:
    """Boolean mask of the revealed disk, centered, radius = fraction x half diagonal.

    Strict inequality keeps fraction 0 empty while fraction 1 (radius strictly
    beyond the farthest pixel center) covers everything; masks nest in fraction.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.ogrid[:h, :w]
    dist_sq = (yy - cy) ** 2 + (xx - cx) ** 2
    radius = fraction * np.hypot(w, h) / 2.0
    return dist_sq < radius * radius


def composite_reveal(
    play_view: np.ndarray, scene: np.ndarray, fraction: float, seed: int = 0
) -> np.ndarray:
    """Show the scene where the reveal mask admits it, the play view elsewhere."""
    del seed  # the disk mask is deterministic; kept for stochastic mask strategies
    _require_rgb(play_view, "play_view")
    _require_rgb(scene, "scene")
    if play_view.shape != scene.shape:
        raise DimensionMismatchError(
            f"play_view {play_view.shape} vs scene {scene.shape}"
        )
    mask = disk_reveal_mask(play_view.shape[:2], fraction)
    return np.where(mask[..., None], scene, play_view).astype(np.uint8)


def two_band_raster(
    size: tuple[int, int],
    horizon_row: int,
    upper: tuple[int, int, int],
    lower: tuple[int, int, int],
) -> np.ndarray:
    """Flat two-color raster: rows above horizon_row get upper, the rest lower."""
    width, height = size
    out = np.empty((height, width, 3), dtype=np.uint8)
    out[:horizon_row] = upper
    out[horizon_row:] = lower
    return out


def render_scene_stub(
    prompt: str, seed: int, size: tuple[int, int], horizon_row: int
) -> np.ndarray:
    """Deterministic stand-in scene: two vertical gradients split at the horizon.

    Band colors derive from sha256(prompt, seed), so the render is a pure
    function of (prompt hash, seed, size).
    """
    width, height = size
    digest = hashlib.sha256(prompt.encode("utf-8") + seed.to_bytes(8, "big", signed=False)).digest()
    c = np.frombuffer(digest[:12], dtype=np.uint8).reshape(4, 3).astype(np.int64)
    out = np.empty((height, width, 3), dtype=np.uint8)
    for start, stop, top, bottom in ((0, horizon_row, c[0], c[1]), (horizon_row, height, c[2], c[3])):
        span = stop - start
        if span <= 0:
            continue
        t = np.arange(span, dtype=np.int64)
        denom = max(span - 1, 1)
        band = top[None, :] + (bottom - top)[None, :] * t[:, None] // denom
        out[start:stop] = band[:, None, :].astype(np.uint8)
    return out


def png_bytes(image: np.ndarray) -> bytes:
    """Encode an (h, w, 3) uint8 array as PNG."""
    buf = io.BytesIO()
    Image.fromarray(_require_rgb(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_array(data: bytes) -> np.ndarray:
    """Decode PNG bytes to an (h, w, 3) uint8 array."""
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
