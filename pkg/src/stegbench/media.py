"""Image codec, resampling, synthetic covers, and dataset manifests.

Netpbm support is deliberately narrow: binary P5 (gray) and P6 (RGB) at
maxval 255. P6 input is converted to gray on read. Everything here is pure
and deterministic so the whole pipeline can be replayed bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .rng import generator

LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114

SYNTH_PREFIX = "synth:"


class PgmError(ValueError):
    """Raised for malformed or unsupported Netpbm input."""


@dataclass(frozen=True)
class Image8:
    """8-bit grayscale raster. Pixels are a read-only (height, width) uint8 array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid dimensions {self.width}x{self.height}")
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.size != self.width * self.height:
            raise ValueError(
                f"pixel count {px.size} != {self.width}x{self.height}"
            )
        px = np.ascontiguousarray(px.reshape(self.height, self.width))
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, Image8):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None

    @property
    def size(self) -> int:
        return self.width * self.height


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping # comments.

    Also yields the byte offset just past each token so the caller can find
    the start of the raster.
    """
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            yield data[start:i], i
    return


def read_pgm(data: bytes) -> Image8:
    """Decode binary P5 (or P6, converted to gray) at maxval 255."""
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
    except StopIteration:
        raise PgmError("malformed header: empty input") from None
    if magic not in (b"P5", b"P6"):
        raise PgmError(f"malformed header: unsupported magic {magic!r}")
    try:
        (w_tok, _), (h_tok, _), (maxval_tok, end) = next(toks), next(toks), next(toks)
        width, height, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    except (StopIteration, ValueError):
        raise PgmError("malformed header: missing or non-numeric fields") from None
    if width < 1 or height < 1:
        raise PgmError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval} (only 255)")
    # exactly one whitespace byte separates the header from the raster
    raster = data[end + 1 :]
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    if len(raster) < need:
        raise PgmError(f"truncated pixel data: need {need} bytes, have {len(raster)}")
    px = np.frombuffer(raster[:need], dtype=np.uint8)
    if channels == 1:
        return Image8(width, height, px)
    planes = px.reshape(height, width, 3)
    return rgb_to_gray(planes[:, :, 0], planes[:, :, 1], planes[:, :, 2])


def write_pgm(img: Image8) -> bytes:
    """Canonical P5 encoding: header then raw row-major bytes."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def pgm_size_bytes(width: int, height: int) -> int:
    """Encoded size of a canonical P5 file (header + payload), exact."""
    return len(f"P5\n{width} {height}\n255\n") + width * height


def rgb_to_gray(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> Image8:
    """Rec.601 luma, rounded half-up and clamped to [0, 255]."""
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (r.shape == g.shape == b.shape) or r.ndim != 2:
        raise ValueError(f"plane dimension mismatch: {r.shape}, {g.shape}, {b.shape}")
    luma = LUMA_R * r + LUMA_G * g + LUMA_B * b
    out = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    h, w = out.shape
    return Image8(w, h, out)


def resize_half_bilinear(img: Image8) -> Image8:
    """Halve both dimensions by aligned 2x2 block averaging, round half-up."""
    if img.width % 2 or img.height % 2:
        raise ValueError(f"dimensions must be even, got {img.width}x{img.height}")
    px = img.pixels.astype(np.uint32)
    sums = px.reshape(img.height // 2, 2, img.width // 2, 2).sum(axis=(1, 3))
    out = ((sums + 2) // 4).astype(np.uint8)  # floor(s/4 + 0.5) in integers
    return Image8(img.width // 2, img.height // 2, out)


def crop_bottom_right_quarter(img: Image8) -> Image8:
    """Sub-raster rows [h/2, h), cols [w/2, w)."""
    if img.width % 2 or img.height % 2:
        raise ValueError(f"dimensions must be even, got {img.width}x{img.height}")
    out = img.pixels[img.height // 2 :, img.width // 2 :]
    return Image8(img.width // 2, img.height // 2, out)


def synth_cover(seed: int, width: int, height: int, smoothness: float) -> Image8:
    """Deterministic pseudo-natural cover: blurred seeded noise plus a ramp.

    smoothness is the Gaussian blur radius applied to the noise field; 0
    leaves the noise unfiltered. Same seed, same arguments -> identical image.
    """
    if smoothness < 0:
        raise ValueError("smoothness must be >= 0")
    rng = generator(seed)
    noise = rng.normal(0.0, 40.0, size=(height, width))
    if smoothness > 0:
        noise = ndimage.gaussian_filter(noise, sigma=smoothness, mode="reflect")
    theta = rng.uniform(0.0, 2.0 * math.pi)
    amp = rng.uniform(16.0, 64.0)
    ys = np.linspace(-1.0, 1.0, height)[:, None]
    xs = np.linspace(-1.0, 1.0, width)[None, :]
    ramp = amp * (math.cos(theta) * xs + math.sin(theta) * ys)
    field_ = 128.0 + noise + ramp
    out = np.clip(np.floor(field_ + 0.5), 0, 255).astype(np.uint8)
    return Image8(width, height, out)


@dataclass(frozen=True)
class ManifestEntry:
    identifier: str
    source: str  # file path, or "synth:<seed>"

    @property
    def is_synthetic(self) -> bool:
        return self.source.startswith(SYNTH_PREFIX)

    @property
    def synth_seed(self) -> int:
        return int(self.source[len(SYNTH_PREFIX) :])


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    split_seed: int = 0
    split_ratio: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.identifier for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate identifiers in manifest")
        if not 0.0 <= self.split_ratio <= 1.0:
            raise ValueError(f"split ratio {self.split_ratio} outside [0, 1]")


def split_manifest(m: DatasetManifest) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Seeded shuffle then split; |train| = round(ratio * N)."""
    if not m.entries:
        raise ValueError("empty manifest")
    n = len(m.entries)
    perm = generator(m.split_seed).permutation(n)
    n_train = int(math.floor(m.split_ratio * n + 0.5))
    train = [m.entries[i] for i in perm[:n_train]]
    val = [m.entries[i] for i in perm[n_train:]]
    return train, val


def read_manifest(text: str, split_seed: int = 0, split_ratio: float = 0.9) -> DatasetManifest:
    """Parse one `<id>\\t<source>` entry per line; blank lines ignored."""
    entries = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValueError(f"manifest line {lineno}: missing tab separator")
        identifier, source = line.split("\t", 1)
        entries.append(ManifestEntry(identifier, source))
    return DatasetManifest(tuple(entries), split_seed, split_ratio)


def write_manifest(m: DatasetManifest) -> str:
    return "".join(f"{e.identifier}\t{e.source}\n" for e in m.entries)


def load_entry(entry: ManifestEntry, width: int, height: int, smoothness: float) -> Image8:
    """Materialize a manifest entry; synthetic entries use the given geometry."""
    if entry.is_synthetic:
        return synth_cover(entry.synth_seed, width, height, smoothness)
    with open(entry.source, "rb") as fh:
        return read_pgm(fh.read())
