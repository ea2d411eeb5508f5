"""Autocorrelation estimators: g2(0) and the multi-photon probability per excitation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from .analysis import WindowSpec, expected_histogram, expected_peaks, peak_area
from .histogram import CorrelationHistogram
from .lineshapes import FWHM_PER_SIGMA, laplace_gauss_cdf
from .source import OverlapModel, coupler_network, hom_routing


class FitError(RuntimeError):
    """The peak fit did not converge to a usable solution."""


def estimate_g2(
    hist: CorrelationHistogram, rep_period: float, window: WindowSpec = WindowSpec(1950.0)
) -> tuple[float, float]:
    """Central peak area over the mean area of the peaks at nonzero multiples of ``rep_period`` (ns)."""
    period = rep_period * 1e3
    lo, hi = hist.span
    if hi - lo < 5 * period:
        raise ValueError(f"histogram spans {(hi - lo) / 1e3:.1f} ns, need at least 5 repetition periods")
    half = 0.5 * window.width
    n_max = int(np.floor((min(-lo, hi) - half) / period + 1e-9))
    central, _ = peak_area(hist, WindowSpec(window.width, 0.0))
    sides = [peak_area(hist, WindowSpec(window.width, s * n * period))[0] for n in range(1, n_max + 1) for s in (-1, 1)]
    side_total = float(sum(sides))
    if side_total <= 0:
        raise ZeroDivisionError("no counts in the side peaks; g2(0) undefined")
    mean_side = side_total / len(sides)
    g2 = central / mean_side
    err = np.sqrt(max(central, 1.0)) / mean_side
    if central > 0:
        err = g2 * np.sqrt(1.0 / central + 1.0 / side_total)
    return float(g2), float(err)


@dataclass(frozen=True)
class PeakModel:
    """Unit-area peak shape given through its cumulative distribution."""

    name: str
    cdf: Callable  # cdf(x, center, *shape)
    p0: Callable  # initial shape parameters from a rough width (ps)
    bounds: tuple


def _lorentz_cdf(x, center, fwhm):
    return 0.5 + np.arctan((np.asarray(x, dtype=float) - center) / (0.5 * fwhm)) / np.pi


def _gauss_cdf(x, center, sigma):
    return special.ndtr((np.asarray(x, dtype=float) - center) / sigma)


PEAK_MODELS = {
    "lorentzian": PeakModel("lorentzian", _lorentz_cdf, lambda w: [w], ([1.0], [np.inf])),
    "gaussian": PeakModel("gaussian", _gauss_cdf, lambda w: [w / FWHM_PER_SIGMA], ([1.0], [np.inf])),
    # two-sided exponential (emission) blurred by Gaussian timing jitter
    "laplace_gauss": PeakModel(
        "laplace_gauss", laplace_gauss_cdf, lambda w: [1.0 / 106.0, w / FWHM_PER_SIGMA], ([1e-5, 1e-3], [1.0, np.inf])
    ),
}


@dataclass(frozen=True)
class MultiphotonFit:
    g: float
    error: float
    ratio: float  # central residual over mean side-peak area
    ratio_error: float
    side_areas: tuple[float, float]
    residual: float
    params: np.ndarray
    model: str
    chi2: float
    dof: int


def g_from_ratio(r: float) -> float:
    """Invert r = 4g/(1+g)^2, the central-to-side ratio of a double-pulse autocorrelation."""
    if r <= 0:
        return 0.0
    if r >= 1:
        return 1.0
    return float(((2.0 - r) - 2.0 * np.sqrt(1.0 - r)) / r)


def estimate_multiphoton_g(
    hist: CorrelationHistogram,
    pulse_sep: float = 1.95,
    window: WindowSpec | None = None,
    model: str = "laplace_gauss",
) -> MultiphotonFit:
    """Multi-photon probability g from a double-pulse autocorrelation.

    The two peaks at +-pulse_sep are fitted (least squares on the bins outside
    the central window) and the counts left over in the central window are the
    multi-photon signal. Same-slot photon pairs give a central area g per cycle
    against (1+g)^2/4 for each side peak.
    """
    if model not in PEAK_MODELS:
        raise ValueError(f"unknown peak model {model!r}; choose from {sorted(PEAK_MODELS)}")
    pm = PEAK_MODELS[model]
    sep = pulse_sep * 1e3
    window = WindowSpec(sep) if window is None else window
    edges_all = np.r_[hist.centers - 0.5 * hist.bin_width, hist.centers[-1] + 0.5 * hist.bin_width]
    reach = sep + 0.5 * window.width
    fit_region = hist.window_mask(-reach, reach) & ~hist.window_mask(*window.bounds)
    if hist.span[1] < reach:
        raise ValueError("histogram too narrow for the side peaks")
    counts = np.asarray(hist.counts, dtype=float)
    y = counts[fit_region]
    if y.sum() <= 0:
        raise FitError("no counts around the side peaks")
    lo_e, hi_e = edges_all[:-1][fit_region], edges_all[1:][fit_region]

    def mass(lo, hi, center, shape):
        return pm.cdf(hi, center, *shape) - pm.cdf(lo, center, *shape)

    def predict(lo, hi, theta):
        a1, a2, c1, c2 = theta[:4]
        shape = theta[4:]
        return a1 * mass(lo, hi, c1, shape) + a2 * mass(lo, hi, c2, shape)

    def resid(theta):
        m = predict(lo_e, hi_e, theta)
        return (y - m) / np.sqrt(np.maximum(m, 1.0))

    guess_area = 0.5 * y.sum()
    theta0 = np.r_[guess_area, guess_area, -sep, sep, pm.p0(400.0)]
    lower = np.r_[0.0, 0.0, -sep - 500.0, sep - 500.0, pm.bounds[0]]
    upper = np.r_[np.inf, np.inf, -sep + 500.0, sep + 500.0, pm.bounds[1]]
    sol = optimize.least_squares(resid, theta0, bounds=(lower, upper), x_scale="jac", max_nfev=2000)
    if not sol.success:
        raise FitError(f"side-peak fit failed ({model}): {sol.message}")
    theta = sol.x
    chi2 = float(np.sum(sol.fun**2))
    dof = int(y.size - theta.size)

    central_mask = hist.window_mask(*window.bounds)
    c_lo, c_hi = edges_all[:-1][central_mask], edges_all[1:][central_mask]
    observed = counts[central_mask].sum()
    tails = predict(c_lo, c_hi, theta).sum()
    residual = observed - tails

    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular fit Jacobian") from exc
    a1, a2 = theta[:2]
    mean_side = 0.5 * (a1 + a2)
    if mean_side <= 0:
        raise FitError("fitted side peaks have zero area")
    var_side = 0.25 * (cov[0, 0] + cov[1, 1] + 2 * cov[0, 1])
    ratio = residual / mean_side
    var_ratio = max(observed, 1.0) / mean_side**2 + ratio**2 * var_side / mean_side**2
    ratio_err = float(np.sqrt(var_ratio))
    g = g_from_ratio(ratio)
    slope = 4.0 * (1.0 - g) / (1.0 + g) ** 3
    return MultiphotonFit(
        g=g,
        error=ratio_err / slope,
        ratio=float(ratio),
        ratio_error=ratio_err,
        side_areas=(float(a1), float(a2)),
        residual=float(residual),
        params=theta,
        model=model,
        chi2=chi2,
        dof=dof,
    )


def hom_visibility(
    hist: CorrelationHistogram,
    pulse_sep: float = 1.95,
    reflectivity: float = 0.5,
    window: WindowSpec | None = None,
) -> tuple[float, float]:
    """Two-photon visibility from the central dip of a pulsed interference histogram.

    The central peak is (R^2 + T^2 - 2RT V)/4 and each peak at +-pulse_sep is
    RT/2, so V follows from their ratio.
    """
    sep = pulse_sep * 1e3
    window = WindowSpec(sep) if window is None else window
    central, _ = peak_area(hist, WindowSpec(window.width, 0.0))
    left, _ = peak_area(hist, WindowSpec(window.width, -sep))
    right, _ = peak_area(hist, WindowSpec(window.width, sep))
    sides = left + right
    if sides <= 0:
        raise ZeroDivisionError("no counts in the peaks at +-pulse_sep")
    r, t = reflectivity, 1.0 - reflectivity
    if r * t == 0:
        raise ValueError("reflectivity 0 or 1 gives no interference")
    ratio = central / (0.5 * sides)
    v = (r * r + t * t - 2 * r * t * ratio) / (2 * r * t)
    ratio_err = ratio * np.sqrt(1.0 / max(central, 1.0) + 1.0 / sides)
    return float(v), float(ratio_err)


def hom_visibility_model(
    hist: CorrelationHistogram,
    emitter,
    detector,
    reflectivity: float = 0.5,
    window: WindowSpec | None = None,
) -> tuple[float, float]:
    """Two-photon visibility with multi-photon and jitter-tail contributions modelled.

    The expected central and side areas are linear in the pair overlap, so the
    measured ratio is inverted exactly against the expected histogram.
    """
    sep = emitter.pulse_sep * 1e3
    window = WindowSpec(sep) if window is None else window
    routing = hom_routing(emitter)
    network = coupler_network(reflectivity)
    wp = emitter.wavepacket()
    span_ns = hist.span[1] / 1e3

    def ratio_for(scale):
        overlap = OverlapModel(wp.dephasing_rate, scale)
        peaks = expected_peaks(emitter, routing, network, overlap, 0, 1)
        exp = expected_histogram(peaks, 1, hist.bin_width, span_ns, detector)
        c = peak_area(exp, WindowSpec(window.width, 0.0))[0]
        s = peak_area(exp, WindowSpec(window.width, -sep))[0] + peak_area(exp, WindowSpec(window.width, sep))[0]
        return c / (0.5 * s)

    central, _ = peak_area(hist, WindowSpec(window.width, 0.0))
    sides = peak_area(hist, WindowSpec(window.width, -sep))[0] + peak_area(hist, WindowSpec(window.width, sep))[0]
    if sides <= 0:
        raise ZeroDivisionError("no counts in the peaks at +-pulse_sep")
    measured = central / (0.5 * sides)
    r0, r1 = ratio_for(0.0), ratio_for(1.0)
    if r0 == r1:
        raise ValueError("reflectivity gives no interference")
    scale = (r0 - measured) / (r0 - r1)
    v_full = OverlapModel(wp.dephasing_rate, 1.0).integrated(emitter.tau_r)
    ratio_err = measured * np.sqrt(1.0 / max(central, 1.0) + 1.0 / sides)
    return float(scale * v_full), float(ratio_err * v_full / abs(r0 - r1))
