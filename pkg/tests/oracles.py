"""Direct-summation references, written independently of the package code.

Everything here favors obviously-correct loops over vectorization; these
functions define what the fast implementations must reproduce.
"""

import numpy as np


def reflect(i, n):
    # fold into [0, n) without duplicating the edge sample
    if n == 1:
        return 0
    while i < 0 or i >= n:
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def correlate_mirror(plane, kernel):
    """Full correlation over the edge-excluding reflective extension."""
    ph, pw = plane.shape
    kh, kw = kernel.shape
    out = np.zeros((ph + kh - 1, pw + kw - 1))
    for u in range(out.shape[0]):
        for v in range(out.shape[1]):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    i = reflect(u + a - (kh - 1), ph)
                    j = reflect(v + b - (kw - 1), pw)
                    acc += plane[i, j] * kernel[a, b]
            out[u, v] = acc
    return out


def cost_double_sum(pixels, kernels, sigma):
    """Unit-change cost: per pixel, loop over every covering coefficient.

    Pixel (i, j) sits at (i + kh - 1, j + kw - 1) in each correlation output;
    coefficient (u, v) covers it when the offset (pi - u, pj - v) is a valid
    tap index, and a unit pixel change moves that coefficient by exactly the
    tap value.
    """
    h, w = pixels.shape
    out = np.zeros((h, w))
    for kernel in kernels:
        kh, kw = kernel.shape
        coeffs = correlate_mirror(pixels, kernel)
        for i in range(h):
            pi = i + kh - 1
            for j in range(w):
                pj = j + kw - 1
                acc = 0.0
                for u in range(pi - kh + 1, pi + 1):
                    for v in range(pj - kw + 1, pj + 1):
                        tap = kernel[pi - u, pj - v]
                        acc += abs(tap) / (sigma + abs(coeffs[u, v]))
                out[i, j] += acc
    return out
