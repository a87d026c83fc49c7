"""Payload-limited sender: change probabilities, calibration, simulation.

Costs become ternary change probabilities through the Gibbs form
p_pm = exp(-lambda rho_pm) / (1 + exp(-lambda rho_plus) + exp(-lambda rho_minus)),
lambda is calibrated by bisection to hit a bit target, probabilities near
0 or 1 snap under the epsilon tolerance, and embedding is simulated by a
per-pixel counter-based draw. No real message is coded; the draw realizes
the optimal change rates directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .costs import CostMap, ParameterTriple, compute_cost_map
from .media import Image8
from .rng import uniform_field

EPSILON_BASE = 1e-10

LOG2_3 = math.log2(3.0)

LAMBDA_ITER_LIMIT = 90
LAMBDA_REL_TOL = 1e-3


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel +1 / -1 change probabilities at a given lambda."""

    p_plus: np.ndarray
    p_minus: np.ndarray
    lam: float

    def __post_init__(self):
        if self.p_plus.shape != self.p_minus.shape:
            raise ValueError("probability planes must share a shape")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        for p in (self.p_plus, self.p_minus):
            if np.any(p < 0) or np.any(p > 1):
                raise ValueError("probabilities outside [0, 1]")
        if np.any(self.p_plus + self.p_minus > 1.0 + 1e-12):
            raise ValueError("p_plus + p_minus exceeds 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_plus.shape

    def change_rate(self) -> float:
        """Expected fraction of changed pixels."""
        return float((self.p_plus + self.p_minus).mean())


@dataclass(frozen=True)
class StegoImage:
    pixels: Image8
    change_count: int
    params: ParameterTriple
    seed: int


def ternary_probs(c: CostMap, lam: float) -> ProbMap:
    """Gibbs change probabilities; wet directions carry exactly zero mass."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    wet_plus, wet_minus = c.wet_mask()
    z_plus = np.exp(-lam * c.rho_plus)
    z_minus = np.exp(-lam * c.rho_minus)
    # zero the weight, not the output, so the stay mass absorbs it exactly
    z_plus[wet_plus] = 0.0
    z_minus[wet_minus] = 0.0
    denom = 1.0 + z_plus + z_minus
    return ProbMap(z_plus / denom, z_minus / denom, lam)


def _entropy_term(p: np.ndarray) -> np.ndarray:
    # 0 log 0 = 0
    safe = np.where(p > 0, p, 1.0)
    return -safe * np.log2(safe)


def payload_entropy(pm: ProbMap) -> float:
    """Total ternary Shannon entropy of the change field, in bits."""
    stay = 1.0 - pm.p_plus - pm.p_minus
    h = _entropy_term(pm.p_plus) + _entropy_term(pm.p_minus) + _entropy_term(np.maximum(stay, 0.0))
    return float(h.sum())


def solve_lambda(c: CostMap, payload_bits: float) -> ProbMap:
    """Bisect lambda until the entropy matches the requested payload.

    Stops at relative error < 1e-3 or after 90 halvings. Requesting the full
    capacity returns the lambda = 0 map unchanged.
    """
    if payload_bits <= 0:
        raise ValueError(f"payload must be positive, got {payload_bits}")
    at_zero = ternary_probs(c, 0.0)
    capacity = payload_entropy(at_zero)
    if capacity <= 0.0:
        raise ValueError("cannot bracket lambda: all-wet cost map has zero capacity")
    if payload_bits > capacity * (1.0 + 1e-9):
        raise ValueError(
            f"payload {payload_bits:.1f} bits exceeds capacity {capacity:.1f} bits"
        )
    if payload_bits >= capacity * (1.0 - 1e-12):
        return at_zero

    hi = 1.0
    while payload_entropy(ternary_probs(c, hi)) > payload_bits:
        hi *= 2.0
        if hi > 2.0**120:
            raise ValueError("cannot bracket lambda: entropy never falls to target")
    lo = 0.0
    probs = at_zero
    for _ in range(LAMBDA_ITER_LIMIT):
        mid = 0.5 * (lo + hi)
        probs = ternary_probs(c, mid)
        achieved = payload_entropy(probs)
        if abs(achieved - payload_bits) / payload_bits < LAMBDA_REL_TOL:
            return probs
        if achieved > payload_bits:
            lo = mid
        else:
            hi = mid
    return probs


def round_probs(pm: ProbMap, epsilon_mult: float) -> ProbMap:
    """Snap probabilities within eps_eff of 0 or 1 to the exact endpoint."""
    if not epsilon_mult > 0:
        raise ValueError(f"epsilon_mult must be positive, got {epsilon_mult}")
    eps = EPSILON_BASE * epsilon_mult
    if eps >= 0.5:
        raise ValueError(f"snap tolerance {eps} is degenerate (>= 0.5)")

    def snap(p):
        out = p.copy()
        out[out < eps] = 0.0
        out[out > 1.0 - eps] = 1.0
        return out

    return ProbMap(snap(pm.p_plus), snap(pm.p_minus), pm.lam)


def simulate_embedding(
    cover: Image8, pm: ProbMap, seed: int, params: ParameterTriple | None = None
) -> StegoImage:
    """Realize the change field with one uniform draw per pixel index."""
    if pm.shape != (cover.height, cover.width):
        raise ValueError(f"probability map {pm.shape} does not match cover")
    u = uniform_field(seed, cover.size).reshape(cover.height, cover.width)
    delta = np.where(u < pm.p_plus, 1, np.where(u < pm.p_plus + pm.p_minus, -1, 0))
    out = cover.pixels.astype(np.int16) + delta
    if out.min() < 0 or out.max() > 255:
        raise ValueError("change escaped [0, 255]; cost map was not range-safe")
    return StegoImage(
        Image8(cover.width, cover.height, out.astype(np.uint8)),
        int(np.count_nonzero(delta)),
        params if params is not None else ParameterTriple(),
        seed,
    )


def embed(cover: Image8, p: ParameterTriple, rate_bpp: float, seed: int) -> StegoImage:
    """Cost map -> calibrated probabilities -> snap -> simulated changes."""
    if not 0 < rate_bpp <= LOG2_3:
        raise ValueError(f"rate {rate_bpp} outside (0, log2 3] bpp")
    cost = compute_cost_map(cover, p)
    probs = solve_lambda(cost, rate_bpp * cover.size)
    probs = round_probs(probs, p.epsilon_mult)
    return simulate_embedding(cover, probs, seed, p)


def lsb_match_baseline(cover: Image8, rate_bpp: float, seed: int) -> StegoImage:
    """Naive arm: flip round(rate n) random pixels by +-1, inward at the ends."""
    if not 0 <= rate_bpp <= 1:
        raise ValueError(f"baseline rate {rate_bpp} outside [0, 1]")
    n = cover.size
    k = int(math.floor(rate_bpp * n + 0.5))
    gen = np.random.Generator(np.random.Philox(key=seed))
    picks = gen.choice(n, size=k, replace=False)
    signs = np.where(gen.random(k) < 0.5, -1, 1)
    flat = cover.pixels.astype(np.int16).ravel().copy()
    signs[flat[picks] == 0] = 1
    signs[flat[picks] == 255] = -1
    flat[picks] += signs
    px = flat.reshape(cover.height, cover.width).astype(np.uint8)
    return StegoImage(Image8(cover.width, cover.height, px), k, ParameterTriple(), seed)


def amplify_diff(cover: Image8, stego: Image8, factor: int) -> Image8:
    """Render changes for inspection: 128 + factor * (stego - cover), clamped."""
    if (cover.width, cover.height) != (stego.width, stego.height):
        raise ValueError("cover and stego dimensions differ")
    if factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    diff = stego.pixels.astype(np.int32) - cover.pixels.astype(np.int32)
    out = np.clip(128 + factor * diff, 0, 255).astype(np.uint8)
    return Image8(cover.width, cover.height, out)


def write_sidecar(st: StegoImage, rate_bpp: float) -> str:
    p = st.params
    return (
        f"seed={st.seed} sigma_mult={p.sigma_mult!r} epsilon_mult={p.epsilon_mult!r} "
        f"wetcost_mult={p.wetcost_mult!r} rate={rate_bpp!r} changes={st.change_count}\n"
    )


_SIDECAR_RE = re.compile(
    r"seed=(\d+) sigma_mult=([^ ]+) epsilon_mult=([^ ]+) "
    r"wetcost_mult=([^ ]+) rate=([^ ]+) changes=(\d+)\s*"
)


def parse_sidecar(line: str) -> dict:
    m = _SIDECAR_RE.fullmatch(line)
    if m is None:
        raise ValueError(f"unparseable sidecar line: {line!r}")
    return {
        "seed": int(m.group(1)),
        "sigma_mult": float(m.group(2)),
        "epsilon_mult": float(m.group(3)),
        "wetcost_mult": float(m.group(4)),
        "rate": float(m.group(5)),
        "changes": int(m.group(6)),
    }
