"""Parametric per-pixel embedding cost maps.

Cost of a unit change at a pixel is the sum, over every directional wavelet
coefficient whose support covers it, of |tap| / (sigma_eff + |coefficient|).
Implemented as a valid convolution of 1 / (sigma_eff + |W_k|) with the tap
magnitudes, which is the same double sum evaluated in bulk. The three grid
multipliers scale the stabilizer sigma, the probability snap epsilon, and
the wet (do-not-touch) cost; only sigma and wet act here, epsilon acts at
embedding time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .media import Image8
from .wavelets import MIN_IMAGE_DIM, conv2_mirror, daubechies8_filters, directional_kernels

SIGMA_BASE = 1.0
WET_COST_BASE = 1e8

COST_MAGIC = b"SUNWCOST"


@dataclass(frozen=True)
class ParameterTriple:
    """Multipliers on the stabilizer, snap threshold, and wet cost.

    (1, 1, 1) reproduces the unmodified cost function.
    """

    sigma_mult: float = 1.0
    epsilon_mult: float = 1.0
    wetcost_mult: float = 1.0

    def __post_init__(self):
        for name in ("sigma_mult", "epsilon_mult", "wetcost_mult"):
            v = getattr(self, name)
            if not (v > 0.0 and np.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite real, got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.sigma_mult, self.epsilon_mult, self.wetcost_mult


DEFAULT_TRIPLE = ParameterTriple()


@dataclass(frozen=True)
class CostMap:
    """Per-pixel ternary change costs; entries at or above wet_threshold are wet."""

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    wet_threshold: float

    def __post_init__(self):
        if self.rho_plus.shape != self.rho_minus.shape:
            raise ValueError("rho planes must share a shape")
        if not self.wet_threshold > 0:
            raise ValueError("wet threshold must be positive")
        for rho in (self.rho_plus, self.rho_minus):
            if not np.all(np.isfinite(rho)):
                raise ValueError("costs must be finite")
            if np.any(rho < 0) or np.any(rho > self.wet_threshold):
                raise ValueError("costs must lie in [0, wet_threshold]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho_plus.shape

    def wet_mask(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.rho_plus >= self.wet_threshold,
            self.rho_minus >= self.wet_threshold,
        )


def rho_unwetted(cover: Image8, sigma_mult: float, kernels=None) -> np.ndarray:
    """Raw cost field before wet clamping; depends on sigma_mult only.

    Exposed separately so parameter sweeps varying epsilon or wet cost can
    reuse one expensive convolution pass per sigma value.
    """
    if not sigma_mult > 0:
        raise ValueError(f"sigma_mult must be positive, got {sigma_mult}")
    if cover.width < MIN_IMAGE_DIM or cover.height < MIN_IMAGE_DIM:
        raise ValueError(
            f"image {cover.width}x{cover.height} below {MIN_IMAGE_DIM}px kernel support"
        )
    if kernels is None:
        kernels = directional_kernels(daubechies8_filters())
    plane = cover.pixels.astype(np.float64)
    sigma = SIGMA_BASE * sigma_mult
    rho = np.zeros((cover.height, cover.width))
    for kernel in kernels:
        w_k = conv2_mirror(plane, kernel)
        suitability = 1.0 / (sigma + np.abs(w_k))
        # valid convolution = correlation with the reversed tap magnitudes;
        # collapses the per-pixel sum over covering coefficients
        rho += signal.convolve2d(suitability, np.abs(kernel), mode="valid")
    return rho


def finalize_cost_map(cover: Image8, rho: np.ndarray, wetcost_mult: float) -> CostMap:
    """Clamp to the wet ceiling and wet the out-of-range change directions."""
    if not wetcost_mult > 0:
        raise ValueError(f"wetcost_mult must be positive, got {wetcost_mult}")
    wet = WET_COST_BASE * wetcost_mult
    rho = np.where(np.isfinite(rho), rho, wet)
    rho = np.minimum(rho, wet)
    rho_plus = rho.copy()
    rho_minus = rho.copy()
    rho_plus[cover.pixels == 255] = wet  # +1 would overflow
    rho_minus[cover.pixels == 0] = wet  # -1 would underflow
    return CostMap(rho_plus, rho_minus, wet)


def compute_cost_map(cover: Image8, p: ParameterTriple) -> CostMap:
    return finalize_cost_map(cover, rho_unwetted(cover, p.sigma_mult), p.wetcost_mult)


def cost_contrast(c: CostMap) -> float:
    """Coefficient of variation (population std over mean) of non-wet costs."""
    values = np.concatenate(
        [
            c.rho_plus[c.rho_plus < c.wet_threshold],
            c.rho_minus[c.rho_minus < c.wet_threshold],
        ]
    )
    if values.size == 0:
        raise ValueError("all-wet cost map has no contrast")
    return float(values.std() / values.mean())


def dump_cost(c: CostMap) -> bytes:
    """Binary debug dump: magic, dims, wet threshold, then both rho rasters."""
    h, w = c.shape
    head = COST_MAGIC + struct.pack("<IId", w, h, c.wet_threshold)
    return head + c.rho_plus.astype("<f8").tobytes() + c.rho_minus.astype("<f8").tobytes()


def load_cost(data: bytes) -> CostMap:
    if data[:8] != COST_MAGIC:
        raise ValueError("not a cost dump: bad magic")
    w, h, wet = struct.unpack_from("<IId", data, 8)
    offset = 8 + struct.calcsize("<IId")
    plane_bytes = w * h * 8
    if len(data) != offset + 2 * plane_bytes:
        raise ValueError("truncated cost dump")
    rho_plus = np.frombuffer(data, "<f8", w * h, offset).reshape(h, w).copy()
    rho_minus = np.frombuffer(data, "<f8", w * h, offset + plane_bytes).reshape(h, w).copy()
    return CostMap(rho_plus, rho_minus, wet)
