"""Two-photon interference of exponentially decaying, dephased wavepackets.

Each photon is a one-sided exponential wavepacket with decay rate
``1/tau_r`` whose phase diffuses at the pure-dephasing rate ``gamma_d``,
so that ``1/tau_c = 1/(2 tau_r) + gamma_d``. Photon 1 is excited at t=0 and
enters coupler port a; photon 2 is excited at ``delta_t`` and enters port b.
The coupler maps ``a -> sqrt(T) c + sqrt(R) d`` and ``b -> sqrt(R) c - sqrt(T) d``.
Delays ``tau`` are detection time at d minus detection time at c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class WavepacketParams:
    tau_r: float = 106.0  # ps
    tau_c: float = 148.0  # ps
    delta_t: float = 0.0  # ps
    detuning: float = 0.0  # rad/ps

    def __post_init__(self):
        if self.tau_r <= 0:
            raise ValueError("tau_r must be positive")
        if not 0 < self.tau_c <= 2 * self.tau_r * (1 + 1e-12):
            raise ValueError(f"tau_c={self.tau_c} must lie in (0, 2*tau_r]")

    @property
    def decay_rate(self) -> float:
        return 1.0 / self.tau_r

    @property
    def dephasing_rate(self) -> float:
        return max(1.0 / self.tau_c - 0.5 / self.tau_r, 0.0)


def _check_r(r: float) -> None:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"coupler ratio {r} outside [0, 1]")


def amplitude(params: WavepacketParams, t, start: float, omega: float = 0.0):
    """Deterministic part of the wavepacket amplitude (phase noise excluded)."""
    t = np.asarray(t, dtype=float)
    g = params.decay_rate
    env = np.sqrt(g) * np.exp(-0.5 * g * (t - start)) * np.exp(-1j * omega * t)
    return np.where(t >= start, env, 0.0)


def two_time_density(params: WavepacketParams, r: float, t_c, t_d, interference: bool = True):
    """Joint density for one click at output c at ``t_c`` and one at d at ``t_d``.

    Built directly from the wavepackets; the phase-noise average multiplies
    the interference term by ``exp(-2 gamma_d |t_d - t_c|)``. With
    ``interference=False`` the photons are treated as distinguishable.
    """
    _check_r(r)
    t = 1.0 - r
    x1c = amplitude(params, t_c, 0.0)
    x1d = amplitude(params, t_d, 0.0)
    x2c = amplitude(params, t_c, params.delta_t, params.detuning)
    x2d = amplitude(params, t_d, params.delta_t, params.detuning)
    direct = t * t * np.abs(x1c * x2d) ** 2 + r * r * np.abs(x2c * x1d) ** 2
    if not interference:
        return direct
    cross = np.real(x1c * x2d * np.conj(x2c * x1d))
    damping = np.exp(-2.0 * params.dephasing_rate * np.abs(np.asarray(t_d) - np.asarray(t_c)))
    return direct - 2.0 * r * t * cross * damping


def coincidence_density(params: WavepacketParams, r: float, tau):
    """Coincidence probability density versus delay ``tau`` (ps^-1)."""
    _check_r(r)
    tau = np.asarray(tau, dtype=float)
    g = params.decay_rate
    k = g + 2.0 * params.dephasing_rate
    d = params.delta_t
    t = 1.0 - r
    out = 0.5 * g * (
        t * t * np.exp(-g * np.abs(tau - d))
        + r * r * np.exp(-g * np.abs(tau + d))
        - 2.0 * r * t * np.exp(-g * abs(d)) * np.exp(-k * np.abs(tau)) * np.cos(params.detuning * tau)
    )
    return np.maximum(out, 0.0)


def interference_overlap(params: WavepacketParams) -> float:
    """Time-integrated mode overlap, i.e. the R=1/2 visibility."""
    g = params.decay_rate
    k = g + 2.0 * params.dephasing_rate
    return g * k * np.exp(-g * abs(params.delta_t)) / (k * k + params.detuning**2)


def total_coincidence(params: WavepacketParams, r: float) -> float:
    _check_r(r)
    t = 1.0 - r
    return t * t + r * r - 2.0 * r * t * interference_overlap(params)


def integrated_visibility(params: WavepacketParams) -> float:
    """Visibility at a balanced coupler; ``tau_c / (2 tau_r)`` when aligned and on resonance."""
    return 1.0 - total_coincidence(params, 0.5) / 0.5


def overlap_profile(params: WavepacketParams, tau):
    """Interference weight of a pair detected ``tau`` apart (aligned photons).

    Integrates to :func:`integrated_visibility` against the distinguishable
    delay density ``(1/(2 tau_r)) exp(-|tau|/tau_r)``.
    """
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2.0 * params.dephasing_rate * np.abs(tau)) * np.cos(params.detuning * tau)


def integrated_coincidence_oracle(
    params: WavepacketParams, r: float, interference: bool = True, span_lifetimes: float = 40.0, epsabs: float = 1e-9
) -> float:
    """Double integral of :func:`two_time_density` over both detection times."""
    lo = min(0.0, params.delta_t)
    hi = max(0.0, params.delta_t) + span_lifetimes * params.tau_r
    kinks = [p for p in sorted({0.0, params.delta_t}) if lo < p < hi]

    def inner(t_c):
        pts = [p for p in (*kinks, t_c) if lo < p < hi]
        return integrate.quad(
            lambda t_d: float(two_time_density(params, r, t_c, t_d, interference)),
            lo, hi, points=pts or None, epsabs=epsabs, limit=400,
        )[0]

    return integrate.quad(inner, lo, hi, points=kinks or None, epsabs=epsabs, limit=400)[0]


def visibility_oracle(params: WavepacketParams) -> float:
    with_int = integrated_coincidence_oracle(params, 0.5, interference=True)
    without = integrated_coincidence_oracle(params, 0.5, interference=False)
    return 1.0 - with_int / without


def hom_dip_counts(
    params: WavepacketParams,
    r: float = 0.5,
    n_peaks_window: int = 1,
    pulse_sep_ns: float = 1.95,
    rep_period_ns: float = 12.5,
    visibility: float | None = None,
) -> dict[float, float]:
    """Expected peak areas of a pulsed HOM histogram, per laser cycle at unit efficiency.

    Two photons per cycle (0 and ``pulse_sep``) are split by a balanced fibre
    splitter; the delayed arm adds ``pulse_sep`` and feeds coupler port b,
    the direct arm feeds port a. Keys are peak positions in ns (d minus c)
    for cycles ``-n_peaks_window..n_peaks_window``.
    """
    _check_r(r)
    v = integrated_visibility(params) if visibility is None else visibility
    t = 1.0 - r
    p_c = {"a": t, "b": r}  # P(output c | input port)
    sep = pulse_sep_ns
    # (arrival time, input port, probability) for each photon of one cycle
    photons = [
        [(0.0, "a", 0.5), (sep, "b", 0.5)],
        [(sep, "a", 0.5), (2 * sep, "b", 0.5)],
    ]
    peaks: dict[float, float] = {}

    def add(offset: float, area: float) -> None:
        key = round(offset, 6)
        peaks[key] = peaks.get(key, 0.0) + area

    for m in range(-n_peaks_window, n_peaks_window + 1):
        shift = m * rep_period_ns
        for i, opts_i in enumerate(photons):
            for j, opts_j in enumerate(photons):
                if m == 0 and i == j:
                    continue
                for ti, port_i, wi in opts_i:
                    for tj0, port_j, wj in opts_j:
                        tj = tj0 + shift
                        w = wi * wj
                        if m == 0 and abs(ti - tj) < 1e-12 and port_i != port_j:
                            # interfering pair: joint probability, counted once
                            if i < j:
                                add(0.0, w * (t * t + r * r - 2 * r * t * v))
                            continue
                        # photon i clicks c, photon j clicks d
                        add(tj - ti, w * p_c[port_i] * (1 - p_c[port_j]))
    return dict(sorted(peaks.items()))
