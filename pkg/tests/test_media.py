import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegbench.media import (
    DatasetManifest,
    Image8,
    ManifestEntry,
    PgmError,
    crop_bottom_right_quarter,
    read_manifest,
    read_pgm,
    resize_half_bilinear,
    rgb_to_gray,
    split_manifest,
    synth_cover,
    write_manifest,
    write_pgm,
)


def test_read_pgm_decodes_p5_header():
    data = b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64])
    img = read_pgm(data)
    assert img == Image8(2, 2, [0, 128, 255, 64])


def test_read_pgm_rejects_high_maxval():
    with pytest.raises(PgmError, match="unsupported maxval"):
        read_pgm(b"P5\n2 2\n65535\n" + bytes(8))


def test_read_pgm_rejects_bad_magic():
    with pytest.raises(PgmError, match="malformed header"):
        read_pgm(b"P7\n2 2\n255\n" + bytes(4))


def test_read_pgm_rejects_truncated_raster():
    with pytest.raises(PgmError, match="truncated"):
        read_pgm(b"P5\n4 4\n255\n" + bytes(15))


def test_read_pgm_skips_comments():
    data = b"P5\n# a comment\n2 1\n255\n" + bytes([9, 9])
    assert read_pgm(data) == Image8(2, 1, [9, 9])


def test_read_pgm_converts_p6_to_gray():
    data = b"P6\n1 1\n255\n" + bytes([255, 0, 0])
    assert read_pgm(data) == Image8(1, 1, [76])


def test_write_pgm_smallest_image():
    assert write_pgm(Image8(1, 1, [7])) == b"P5\n1 1\n255\n" + bytes([7])


def test_write_pgm_is_deterministic():
    img = synth_cover(3, 16, 16, 1.0)
    assert write_pgm(img) == write_pgm(img)


def test_round_trip_canonical_bytes():
    data = b"P5\n3 2\n255\n" + bytes([1, 2, 3, 4, 5, 6])
    assert write_pgm(read_pgm(data)) == data


@settings(max_examples=50, deadline=None)
@given(
    w=st.integers(1, 24),
    h=st.integers(1, 24),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_random_rasters(w, h, seed):
    px = np.random.default_rng(seed).integers(0, 256, size=h * w, dtype=np.uint8)
    img = Image8(w, h, px)
    assert read_pgm(write_pgm(img)) == img


def test_rgb_to_gray_fixed_points():
    white = np.full((2, 2), 255, np.uint8)
    black = np.zeros((2, 2), np.uint8)
    assert np.all(rgb_to_gray(white, white, white).pixels == 255)
    assert np.all(rgb_to_gray(black, black, black).pixels == 0)


def test_rgb_to_gray_pure_red():
    r = np.full((1, 1), 255, np.uint8)
    z = np.zeros((1, 1), np.uint8)
    # 0.299 * 255 = 76.245 rounds down to 76
    assert rgb_to_gray(r, z, z).pixels[0, 0] == 76


def test_rgb_to_gray_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        rgb_to_gray(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_resize_half_constant():
    img = Image8(2, 2, [0, 0, 0, 0])
    assert resize_half_bilinear(img) == Image8(1, 1, [0])


def test_resize_half_block_mean():
    img = Image8(2, 2, [10, 20, 30, 40])
    assert resize_half_bilinear(img) == Image8(1, 1, [25])


def test_resize_half_matches_scalar_reference():
    rng = np.random.default_rng(7)
    px = rng.integers(0, 256, size=(6, 8), dtype=np.uint8)
    img = Image8(8, 6, px)
    out = resize_half_bilinear(img)
    for i in range(3):
        for j in range(4):
            block = px[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].astype(int)
            want = int(block.sum() / 4.0 + 0.5)
            assert out.pixels[i, j] == want


def test_resize_half_512_gives_256():
    img = synth_cover(11, 512, 512, 2.0)
    out = resize_half_bilinear(img)
    assert (out.width, out.height) == (256, 256)


def test_resize_rejects_odd_dims():
    with pytest.raises(ValueError, match="even"):
        resize_half_bilinear(Image8(3, 2, [0] * 6))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_resize_constant_stays_constant(seed):
    level = seed % 256
    img = Image8(8, 8, [level] * 64)
    out = resize_half_bilinear(img)
    assert np.all(out.pixels == level)


def test_crop_four_pixel_case():
    assert crop_bottom_right_quarter(Image8(2, 2, [1, 2, 3, 4])) == Image8(1, 1, [4])


def test_crop_512_gives_256():
    img = synth_cover(5, 512, 512, 1.5)
    out = crop_bottom_right_quarter(img)
    assert (out.width, out.height) == (256, 256)
    assert np.array_equal(out.pixels, img.pixels[256:, 256:])


def test_crop_constant_stays_constant():
    img = Image8(4, 4, [77] * 16)
    assert np.all(crop_bottom_right_quarter(img).pixels == 77)


def test_crop_twice_is_bottom_right_sixteenth():
    img = synth_cover(9, 4096, 4096, 0.0)
    twice = crop_bottom_right_quarter(crop_bottom_right_quarter(img))
    assert np.array_equal(twice.pixels, img.pixels[3072:, 3072:])


def test_crop_rejects_odd_dims():
    with pytest.raises(ValueError, match="even"):
        crop_bottom_right_quarter(Image8(2, 3, [0] * 6))


def test_synth_cover_deterministic():
    a = synth_cover(1, 64, 64, 2.0)
    b = synth_cover(1, 64, 64, 2.0)
    assert a == b


def test_synth_cover_blur_reduces_variance():
    rough = synth_cover(2, 64, 64, 0.0)
    smooth = synth_cover(2, 64, 64, 4.0)
    assert rough.pixels.astype(float).var() > smooth.pixels.astype(float).var()


def test_synth_cover_spans_many_levels():
    img = synth_cover(3, 64, 64, 2.0)
    assert len(np.unique(img.pixels)) >= 32


def test_split_manifest_ninety_ten():
    entries = tuple(ManifestEntry(f"c{i}", f"synth:{i}") for i in range(10))
    train, val = split_manifest(DatasetManifest(entries, split_seed=4, split_ratio=0.9))
    assert len(train) == 9 and len(val) == 1


def test_split_manifest_ratio_one():
    entries = tuple(ManifestEntry(f"c{i}", f"synth:{i}") for i in range(5))
    train, val = split_manifest(DatasetManifest(entries, split_seed=0, split_ratio=1.0))
    assert len(train) == 5 and val == []


def test_split_manifest_deterministic():
    entries = tuple(ManifestEntry(f"c{i}", f"synth:{i}") for i in range(20))
    m = DatasetManifest(entries, split_seed=8, split_ratio=0.5)
    assert split_manifest(m) == split_manifest(m)


@pytest.mark.parametrize("ratio", [0.0, 0.5, 0.9, 1.0])
def test_split_manifest_partitions(ratio):
    entries = tuple(ManifestEntry(f"c{i}", f"synth:{i}") for i in range(17))
    train, val = split_manifest(DatasetManifest(entries, split_seed=2, split_ratio=ratio))
    ids = sorted(e.identifier for e in train + val)
    assert ids == sorted(e.identifier for e in entries)


def test_split_manifest_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        split_manifest(DatasetManifest((), 0, 0.9))


def test_manifest_rejects_duplicate_ids():
    entries = (ManifestEntry("a", "synth:1"), ManifestEntry("a", "synth:2"))
    with pytest.raises(ValueError, match="duplicate"):
        DatasetManifest(entries, 0, 0.9)


def test_manifest_text_round_trip():
    text = "c0\tsynth:12\nc1\t/data/x.pgm\n"
    m = read_manifest(text)
    assert write_manifest(m) == text
    assert m.entries[0].is_synthetic and m.entries[0].synth_seed == 12
    assert not m.entries[1].is_synthetic


def test_manifest_rejects_missing_tab():
    with pytest.raises(ValueError, match="tab"):
        read_manifest("c0 synth:12\n")
