"""Directional db8 filter bank and undecimated first-level residuals.

The three 16x16 kernels (low x high, high x low, high x high outer products)
pick out the highest-frequency subbands in both orientations. Residuals are
full correlations over a mirror-extended plane, so every coefficient whose
support touches the image is retained; all arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

# 16-tap Daubechies-8 decomposition lowpass, frozen at full double precision
# from spectral factorization of the half-band polynomial (sum = sqrt(2),
# unit energy, orthogonal at even shifts; hard-coding avoids a wavelet dep).
_DB8_LOWPASS = (
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
)

MIN_IMAGE_DIM = 8  # smallest plane the mirror-extended bank accepts


@dataclass(frozen=True)
class FilterPair:
    """Decomposition filter pair under the quadrature mirror relation."""

    lowpass: tuple[float, ...]
    highpass: tuple[float, ...]

    def __post_init__(self):
        lo = np.asarray(self.lowpass)
        hi = np.asarray(self.highpass)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lowpass and highpass must be equal-length 1D taps")
        if abs(lo.sum() - np.sqrt(2.0)) > 1e-12 or abs((lo * lo).sum() - 1.0) > 1e-12:
            raise ValueError("lowpass taps violate wavelet normalization")
        signs = (-1.0) ** np.arange(lo.size)
        if np.max(np.abs(hi - signs * lo[::-1])) > 1e-12:
            raise ValueError("highpass is not the quadrature mirror of lowpass")


def daubechies8_filters() -> FilterPair:
    """The 16-tap db8 pair; highpass[k] = (-1)^k * lowpass[L-1-k]."""
    lo = _DB8_LOWPASS
    n = len(lo)
    hi = tuple((-1.0) ** k * lo[n - 1 - k] for k in range(n))
    return FilterPair(lo, hi)


def directional_kernels(fp: FilterPair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outer-product kernels (K_LH, K_HL, K_HH); row tap first, column tap second."""
    lo = np.asarray(fp.lowpass, dtype=np.float64)
    hi = np.asarray(fp.highpass, dtype=np.float64)
    k_lh = np.outer(lo, hi)
    k_hl = np.outer(hi, lo)
    k_hh = np.outer(hi, hi)
    return k_lh, k_hl, k_hh


def mirror_index(i: int, n: int) -> int:
    """Map any integer onto [0, n) by edge-excluding reflection (period 2n-2)."""
    if n == 1:
        return 0
    m = abs(i) % (2 * n - 2)
    return 2 * n - 2 - m if m >= n else m


def conv2_mirror(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full correlation over a mirror-extended plane.

    Output dims = plane dims + kernel dims - 1; borders see reflected samples
    (edge row and column not duplicated).
    """
    plane = np.asarray(plane, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    ph, pw = plane.shape
    kh, kw = kernel.shape
    if kh > ph + 2 * (kh - 1) or kw > pw + 2 * (kw - 1):
        raise ValueError(
            f"kernel {kh}x{kw} larger than mirror-padded plane {ph}x{pw}"
        )
    padded = np.pad(plane, ((kh - 1, kh - 1), (kw - 1, kw - 1)), mode="reflect")
    return signal.correlate2d(padded, kernel, mode="valid")


@dataclass(frozen=True)
class ResidualSet:
    """First-level undecimated detail planes, one per direction."""

    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        if not (self.lh.shape == self.hl.shape == self.hh.shape):
            raise ValueError("residual planes must share a shape")

    @property
    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lh, self.hl, self.hh


def wavelet_residuals(img) -> ResidualSet:
    """Correlate the pixel plane with each directional kernel."""
    if img.width < MIN_IMAGE_DIM or img.height < MIN_IMAGE_DIM:
        raise ValueError(
            f"image {img.width}x{img.height} below {MIN_IMAGE_DIM}px kernel support"
        )
    plane = img.pixels.astype(np.float64)
    k_lh, k_hl, k_hh = directional_kernels(daubechies8_filters())
    return ResidualSet(
        conv2_mirror(plane, k_lh),
        conv2_mirror(plane, k_hl),
        conv2_mirror(plane, k_hh),
    )
