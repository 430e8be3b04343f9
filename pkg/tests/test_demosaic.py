from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flopforge.demosaic import BayerImage, demosaic_at, demosaic_bilinear, mosaic_from_rgb
from flopforge.errors import FormatError


def channel_of(r, c):
    if r % 2 == 0 and c % 2 == 0:
        return 2
    if r % 2 == 1 and c % 2 == 1:
        return 0
    return 1


def brute_force(raw):
    """Mean of same-channel samples in each pixel's 3x3 window, mirrored at the edges."""
    h, w = raw.shape

    def mirror(i, n):
        return -i if i < 0 else (2 * (n - 1) - i if i >= n else i)

    out = np.zeros((h, w, 3), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            for ch in range(3):
                if channel_of(r, c) == ch:
                    out[r, c, ch] = raw[r, c]
                    continue
                vals = [
                    int(raw[mirror(r + dr, h), mirror(c + dc, w)])
                    for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                    if channel_of(r + dr, c + dc) == ch
                ]
                mean = Fraction(sum(vals), len(vals))
                out[r, c, ch] = int(mean + Fraction(1, 2))  # half away from zero
    return out


mosaics = arrays(np.uint8, st.tuples(st.integers(1, 6).map(lambda n: 2 * n),
                                     st.integers(1, 6).map(lambda n: 2 * n)))


def test_uniform_field():
    out = demosaic_bilinear(np.full((8, 10), 128, np.uint8))
    assert np.all(out == 128)


def test_constant_channels_4x4():
    raw = mosaic_from_rgb(np.broadcast_to(np.array([50, 100, 200], np.uint8), (4, 4, 3)))
    assert raw[0, 0] == 200 and raw[0, 1] == 100 and raw[1, 1] == 50
    out = demosaic_bilinear(raw)
    assert np.all(out == [50, 100, 200])


def test_single_blue_impulse():
    raw = np.zeros((8, 8), np.uint8)
    raw[2, 2] = 255
    out = demosaic_bilinear(raw)
    blue = out[..., 2]
    expected = np.zeros((8, 8), np.uint8)
    expected[2, 2] = 255
    expected[2, 1] = expected[2, 3] = 128  # G sites in the B row: mean of left/right
    expected[1, 2] = expected[3, 2] = 128  # G sites in the R row: mean of up/down
    expected[1, 1] = expected[1, 3] = expected[3, 1] = expected[3, 3] = 64  # R sites: 255/4
    np.testing.assert_array_equal(blue, expected)
    assert out[..., 0].max() == 0 and out[..., 1].max() == 0


@settings(max_examples=60, deadline=None)
@given(mosaics)
def test_matches_brute_force(raw):
    np.testing.assert_array_equal(demosaic_bilinear(raw), brute_force(raw))


@settings(max_examples=60, deadline=None)
@given(mosaics)
def test_demosaic_at_matches_full(raw):
    full = demosaic_bilinear(raw)
    rows, cols = np.nonzero(np.ones_like(raw, dtype=bool))
    np.testing.assert_array_equal(demosaic_at(raw, rows, cols), full[rows, cols])


def test_channel_provenance_random():
    raw = np.random.default_rng(3).integers(0, 256, (64, 64), dtype=np.uint8)
    out = demosaic_bilinear(raw)
    np.testing.assert_array_equal(out[0::2, 0::2, 2], raw[0::2, 0::2])
    np.testing.assert_array_equal(out[0::2, 1::2, 1], raw[0::2, 1::2])
    np.testing.assert_array_equal(out[1::2, 0::2, 1], raw[1::2, 0::2])
    np.testing.assert_array_equal(out[1::2, 1::2, 0], raw[1::2, 1::2])


@pytest.mark.parametrize("bad", [(3, 4), (4, 5), (0, 4)])
def test_odd_dimensions_rejected(bad):
    with pytest.raises(FormatError):
        demosaic_bilinear(np.zeros(bad, np.uint8))


def test_rejects_non_mosaic():
    with pytest.raises(FormatError):
        demosaic_bilinear(np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(FormatError):
        demosaic_bilinear(np.zeros((4, 4), np.uint16))


def test_bayer_image_wrapper():
    img = BayerImage(np.zeros((6, 8), np.uint8))
    assert (img.width, img.height) == (8, 6)
    assert demosaic_bilinear(img).shape == (6, 8, 3)
    with pytest.raises(FormatError):
        BayerImage(np.zeros((5, 8), np.uint8))
