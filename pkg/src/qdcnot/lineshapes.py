"""Unit-area peak shapes for coincidence histograms."""

from __future__ import annotations

import numpy as np
from scipy import special

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


def gaussian(x, center: float, sigma: float):
    z = (np.asarray(x, dtype=float) - center) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2 * np.pi))


def lorentzian(x, center: float, fwhm: float):
    hw = 0.5 * fwhm
    dx = np.asarray(x, dtype=float) - center
    return hw / (np.pi * (dx * dx + hw * hw))


def laplace(x, center: float, rate: float):
    return 0.5 * rate * np.exp(-rate * np.abs(np.asarray(x, dtype=float) - center))


def laplace_gauss(x, center: float, rate: float, sigma: float):
    """Two-sided exponential ``(rate/2) exp(-rate |x|)`` convolved with a Gaussian."""
    if sigma <= 0:
        return laplace(x, center, rate)
    x = np.asarray(x, dtype=float) - center
    lam_sig = rate * sigma
    root2s = np.sqrt(2.0) * sigma

    def branch(y):
        u = (rate * sigma * sigma - y) / root2s
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            stable_pos = np.exp(-0.5 * (y / sigma) ** 2) * special.erfcx(u)
            stable_neg = np.exp(0.5 * lam_sig**2 - rate * y) * special.erfc(u)
        return np.where(u > 0, stable_pos, stable_neg)

    return 0.25 * rate * (branch(x) + branch(-x))


def laplace_gauss_cdf(x, center: float, rate: float, sigma: float):
    """Cumulative distribution of :func:`laplace_gauss`."""
    x = np.asarray(x, dtype=float) - center
    if sigma <= 0:
        half_tail = 0.5 * np.exp(-rate * np.abs(x))
        return np.where(x < 0, half_tail, 1.0 - half_tail)
    root2s = np.sqrt(2.0) * sigma

    def tail(y):
        # 0.5 * E[exp(-rate (y - G))] restricted to G < y, G ~ N(0, sigma^2)
        u = (rate * sigma * sigma - y) / root2s
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            a = np.exp(-0.5 * (y / sigma) ** 2) * special.erfcx(u)
            b = np.exp(0.5 * (rate * sigma) ** 2 - rate * y) * special.erfc(u)
        return 0.25 * np.where(u > 0, a, b)

    phi = special.ndtr(x / sigma)
    return phi - tail(x) + tail(-x)


def bin_integral(shape_cdf, edges):
    """Probability mass per bin given a CDF and bin edges."""
    c = shape_cdf(np.asarray(edges, dtype=float))
    return np.diff(c)
