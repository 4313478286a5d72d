"""Raster kernels: pixelizer, median-cut, reveal masks, band rasters, PNG io."""

import numpy as np
import pytest

from storyforge.errors import BadCellError, BadPaletteError, DimensionMismatchError
from storyforge.raster import (
    composite_reveal,
    disk_reveal_mask,
    median_cut,
    pixelize,
    png_bytes,
    png_to_array,
    render_scene_stub,
    two_band_raster,
)


def random_image(rng, max_side=48):
    h = rng.integers(1, max_side)
    w = rng.integers(1, max_side)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def distinct_colors(image):
    return len(np.unique(image.reshape(-1, 3), axis=0))


def oracle_block_means(image, cell):
    """Naive per-block floor means, the hand-computable reference."""
    h, w = image.shape[:2]
    out = np.empty_like(image)
    for y0 in range(0, h, cell):
        for x0 in range(0, w, cell):
            block = image[y0 : y0 + cell, x0 : x0 + cell].astype(np.int64)
            mean = block.reshape(-1, 3).sum(axis=0) // block.reshape(-1, 3).shape[0]
            out[y0 : y0 + cell, x0 : x0 + cell] = mean
    return out


class TestPixelize:
    def test_uniform_image_is_fixed_point(self):
        img = np.full((16, 16, 3), 128, dtype=np.uint8)
        for cell in (1, 3, 16):
            assert np.array_equal(pixelize(img, cell=cell, palette_size=1), img)

    def test_checkerboard_hand_case(self):
        # 4x4 black/white checkerboard, cell=2: every 2x2 block holds two black
        # and two white pixels, so each block mean is floor(510/4) = 127.
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        img[::2, 1::2] = 255
        img[1::2, ::2] = 255
        out = pixelize(img, cell=2, palette_size=4)
        assert np.array_equal(out, np.full((4, 4, 3), 127, dtype=np.uint8))

    def test_identity_at_cell_one_with_ample_palette(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
        out = pixelize(img, cell=1, palette_size=distinct_colors(img))
        assert np.array_equal(out, img)

    def test_idempotent_at_cell_one(self):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
        once = pixelize(img, cell=1, palette_size=9)
        twice = pixelize(once, cell=1, palette_size=9)
        assert np.array_equal(once, twice)

    def test_block_means_match_naive_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            img = random_image(rng)
            cell = int(rng.integers(1, min(img.shape[:2]) + 1))
            ample = distinct_colors(oracle_block_means(img, cell))
            out = pixelize(img, cell=cell, palette_size=ample)
            assert np.array_equal(out, oracle_block_means(img, cell))

    def test_edge_blocks_smaller_than_cell(self):
        img = np.arange(5 * 7 * 3, dtype=np.uint8).reshape(5, 7, 3)
        out = pixelize(img, cell=4, palette_size=64)
        assert out.shape == img.shape
        assert np.array_equal(out, oracle_block_means(img, 4))

    def test_palette_bound_dimensions_determinism(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            img = random_image(rng)
            cell = int(rng.integers(1, min(img.shape[:2]) + 1))
            palette = int(rng.integers(1, 40))
            out1 = pixelize(img, cell=cell, palette_size=palette)
            out2 = pixelize(img.copy(), cell=cell, palette_size=palette)
            assert out1.shape == img.shape
            assert distinct_colors(out1) <= palette
            assert out1.tobytes() == out2.tobytes()

    def test_bad_cell_and_palette(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        with pytest.raises(BadCellError):
            pixelize(img, cell=5)
        with pytest.raises(BadCellError):
            pixelize(img, cell=0)
        with pytest.raises(BadPaletteError):
            pixelize(img, cell=2, palette_size=0)


class TestMedianCut:
    def test_exact_representation_when_palette_suffices(self):
        colors = np.array([[0, 0, 0], [255, 255, 255], [10, 200, 30]], dtype=np.uint8)
        palette, labels = median_cut(colors, 3)
        assert np.array_equal(palette[labels], colors)

    def test_single_color_never_splits(self):
        colors = np.tile(np.array([[9, 9, 9]], dtype=np.uint8), (10, 1))
        palette, labels = median_cut(colors, 8)
        assert len(palette) == 1
        assert np.array_equal(palette[labels], colors)

    def test_channel_tie_breaks_red_first(self):
        # equal ranges on R and G; the split must order by the red channel
        colors = np.array([[0, 10, 0], [10, 0, 0], [5, 5, 0], [10, 10, 0]])
        palette, labels = median_cut(colors, 2)
        left = {tuple(c) for c, l in zip(colors, labels) if l == labels[0]}
        assert (0, 10, 0) in left and (5, 5, 0) in left  # low red stays left


class TestRevealMask:
    def test_fraction_zero_empty_one_full(self):
        for shape in ((1, 1), (5, 9), (16, 16)):
            assert not disk_reveal_mask(shape, 0.0).any()
            assert disk_reveal_mask(shape, 1.0).all()

    def test_masks_nest(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            shape = (int(rng.integers(1, 40)), int(rng.integers(1, 40)))
            f1, f2 = sorted(rng.random(2))
            m1, m2 = disk_reveal_mask(shape, f1), disk_reveal_mask(shape, f2)
            assert not (m1 & ~m2).any()

    def test_mask_grows_from_center(self):
        mask = disk_reveal_mask((9, 9), 0.2)
        assert mask[4, 4]
        assert not mask[0, 0]


class TestCompositeReveal:
    def test_fraction_zero_is_play_view(self):
        rng = np.random.default_rng(12)
        play = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        scene = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        assert composite_reveal(play, scene, 0.0).tobytes() == play.tobytes()

    def test_fraction_one_is_scene(self):
        rng = np.random.default_rng(13)
        play = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        scene = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        assert composite_reveal(play, scene, 1.0).tobytes() == scene.tobytes()

    def test_revealed_pixels_nested_across_fractions(self):
        play = np.zeros((12, 10, 3), dtype=np.uint8)
        scene = np.full((12, 10, 3), 255, dtype=np.uint8)
        at_25 = composite_reveal(play, scene, 0.25)
        at_50 = composite_reveal(play, scene, 0.5)
        revealed_25 = (at_25 == 255).all(axis=2)
        revealed_50 = (at_50 == 255).all(axis=2)
        assert not (revealed_25 & ~revealed_50).any()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            composite_reveal(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5, 3), np.uint8), 0.5)

    def test_fraction_out_of_range(self):
        img = np.zeros((4, 4, 3), np.uint8)
        with pytest.raises(ValueError):
            composite_reveal(img, img, 1.5)


class TestBandsAndStub:
    def test_two_band_rows_uniform(self):
        raster = two_band_raster((6, 10), 4, (1, 2, 3), (7, 8, 9))
        assert raster.shape == (10, 6, 3)
        assert (raster[:4] == (1, 2, 3)).all()
        assert (raster[4:] == (7, 8, 9)).all()

    def test_stub_pure_function(self):
        a = render_scene_stub("dunes at dusk", 9, (32, 24), 14)
        b = render_scene_stub("dunes at dusk", 9, (32, 24), 14)
        assert a.tobytes() == b.tobytes()
        c = render_scene_stub("dunes at dusk", 10, (32, 24), 14)
        assert a.tobytes() != c.tobytes()

    def test_stub_shape_and_degenerate_horizons(self):
        for horizon in (0, 24):
            img = render_scene_stub("x", 1, (8, 24), horizon)
            assert img.shape == (24, 8, 3)

    def test_png_round_trip(self):
        rng = np.random.default_rng(14)
        img = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
        assert np.array_equal(png_to_array(png_bytes(img)), img)
