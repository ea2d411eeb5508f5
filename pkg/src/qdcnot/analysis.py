"""From coincidence histograms to truth tables, visibilities and model curves."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, is_dataclass
from typing import Mapping

import numpy as np
from scipy import stats

from .circuit import (
    LOGICAL_STATES,
    CnotCircuitParams,
    LogicalInput,
    TruthTable,
    all_inputs,
    truth_table,
)
from .histogram import CorrelationHistogram, correlate
from .lineshapes import laplace_gauss_cdf
from .source import (
    CHANNEL_NAMES,
    DetectorModel,
    EmitterParams,
    OpticalNetwork,
    OverlapModel,
    RoutingConfig,
    cnot_network,
)
from .wavepacket import integrated_visibility

DEFAULT_WINDOW_PS = 1950.0
NARROW_WINDOW_PS = 600.0


class DegenerateRowError(ValueError):
    """A truth-table row has no coincidences to normalise by."""


class ExtractionError(RuntimeError):
    """Model inversion found no acceptable parameter value."""


@dataclass(frozen=True)
class WindowSpec:
    width: float = DEFAULT_WINDOW_PS  # ps
    center: float = 0.0  # ps

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("window width must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.center - 0.5 * self.width, self.center + 0.5 * self.width


def pane_key(input_state: str, output_state: str) -> tuple[str, str]:
    return LogicalInput.parse(input_state).label, LogicalInput.parse(output_state).label


def peak_area(hist: CorrelationHistogram, window: WindowSpec) -> tuple[float, float]:
    lo, hi = window.bounds
    span_lo, span_hi = hist.span
    if lo < span_lo - 1e-9 or hi > span_hi + 1e-9:
        raise ValueError(f"window [{lo}, {hi}] ps outside histogram span [{span_lo}, {span_hi}] ps")
    area = hist.counts[hist.window_mask(lo, hi)].sum()
    area = int(area) if np.issubdtype(np.asarray(hist.counts).dtype, np.integer) else float(area)
    return area, float(np.sqrt(area))


def _area_matrix(
    hists: Mapping[tuple[str, str], CorrelationHistogram], window: WindowSpec, inputs=None
) -> np.ndarray:
    inputs = all_inputs() if inputs is None else inputs
    areas = np.zeros((len(inputs), 4))
    for row, inp in enumerate(inputs):
        for out in all_inputs():
            key = (inp.label, out.label)
            if key not in hists:
                raise KeyError(f"missing pane <{inp.label}|{out.label}>")
            areas[row, out.index] = peak_area(hists[key], window)[0]
    return areas


def _normalise_rows(areas: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    totals = areas.sum(axis=1)
    if np.any(totals <= 0):
        bad = [labels[i] for i in np.flatnonzero(totals <= 0)]
        raise DegenerateRowError(f"no coincidences in window for input(s) {bad}")
    entries = areas / totals[:, None]
    # d p_i / d A_j = (delta_ij - p_i) / S, independent Poisson areas
    var = ((1 - entries) ** 2 * areas + entries**2 * (totals[:, None] - areas)) / totals[:, None] ** 2
    return entries, totals, np.sqrt(var)


def truth_table_from_histograms(
    hists: Mapping[tuple[str, str], CorrelationHistogram], window: WindowSpec = WindowSpec()
) -> TruthTable:
    """Row-normalised table from the tau=0 peak areas; Poisson errors per cell.

    ``postselection_prob`` holds the raw coincidence count of each row.
    """
    entries, totals, errors = _normalise_rows(_area_matrix(hists, window), list(LOGICAL_STATES))
    return TruthTable(entries, totals, errors)


def retained_fraction(
    hists: Mapping[tuple[str, str], CorrelationHistogram], narrow: WindowSpec, wide: WindowSpec
) -> float:
    return float(_area_matrix(hists, narrow).sum() / _area_matrix(hists, wide).sum())


def extract_v1(
    correct: CorrelationHistogram, wrong: CorrelationHistogram, window: WindowSpec = WindowSpec()
) -> tuple[float, float]:
    """Fringe contrast from the <00|00> (correct) and <00|01> (wrong) panes."""
    a, _ = peak_area(correct, window)
    b, _ = peak_area(wrong, window)
    if a + b <= 0:
        raise DegenerateRowError("no coincidences in either control-0 pane")
    v = (a - b) / (a + b)
    err = 2.0 * np.sqrt(a * b * (a + b)) / (a + b) ** 2
    return float(v), float(err)


@dataclass(frozen=True)
class V2Extraction:
    value: float
    error: float
    chi2_min: float
    grid: np.ndarray
    chi2: np.ndarray


def extract_v2(
    hists: Mapping[tuple[str, str], CorrelationHistogram],
    params: CnotCircuitParams,
    window: WindowSpec = WindowSpec(),
    step: float = 0.01,
    max_chi2: float = 25.0,
    *,
    emitter: EmitterParams | None = None,
    detector: DetectorModel | None = None,
) -> V2Extraction:
    """Invert for V2 from the <10|10> and <11|11> cells.

    The observed cells are row-normalised, so all panes of the two control-1
    inputs are needed. Without ``emitter`` the model is the analytic truth
    table. With it, the model is the expected central-peak areas of the
    source (multi-photon events, jitter tails of neighbouring peaks); those
    areas are linear in V2, so two expected histograms per pane suffice and
    the grid stops at the wavepacket limit. Every grid point is scored by
    chi^2 against the measured cells; the minimum is refined by a parabola
    whose curvature gives the delta-chi^2 = 1 error.
    """
    rows = [LogicalInput.parse("10"), LogicalInput.parse("11")]
    entries, totals, errors = _normalise_rows(_area_matrix(hists, window, rows), [r.label for r in rows])
    obs = np.array([entries[k, r.index] for k, r in enumerate(rows)])
    err = np.maximum([errors[k, r.index] for k, r in enumerate(rows)], 1.0 / totals)
    if emitter is None:
        grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)

        def predict(v):
            model = truth_table(params.replace(V2=float(v))).entries
            return np.array([model[r.index, r.index] for r in rows])

    else:
        detector = DetectorModel() if detector is None else detector
        v_max = min(integrated_visibility(emitter.wavepacket()), 1.0)
        grid = np.round(np.arange(0.0, v_max + 1e-12, step), 10)
        span_ns = max(abs(b) for h in hists.values() for b in h.span) / 1e3
        bin_width = next(iter(hists.values())).bin_width

        def central_areas(v):
            areas = np.zeros((len(rows), 4))
            for k, r in enumerate(rows):
                for o in all_inputs():
                    h = predicted_correlation_curves(
                        emitter, params.replace(V2=v), r.label, o.label, detector=detector,
                        n_cycles=1, bin_width=bin_width, span_ns=span_ns,
                    )
                    areas[k, o.index] = peak_area(h, window)[0]
            return areas

        a0, a1 = central_areas(0.0), central_areas(v_max)

        def predict(v):
            areas = a0 + (v / v_max) * (a1 - a0)
            model = areas / areas.sum(axis=1, keepdims=True)
            return np.array([model[k, r.index] for k, r in enumerate(rows)])

    chi2 = np.array([np.sum(((obs - predict(v)) / err) ** 2) for v in grid])
    k = int(np.argmin(chi2))
    if chi2[k] > max_chi2:
        raise ExtractionError(
            f"best V2={grid[k]:.2f} leaves chi2={chi2[k]:.1f} > {max_chi2}; data inconsistent with circuit model"
        )
    j = min(max(k, 1), len(grid) - 2)  # parabola through three neighbouring points
    y0, y1, y2 = chi2[j - 1], chi2[j], chi2[j + 1]
    curv = (y0 - 2 * y1 + y2) / step**2
    best = grid[k]
    if curv > 0:
        best = grid[j] + 0.5 * step * (y0 - y2) / (y0 - 2 * y1 + y2)
        error = np.sqrt(2.0 / curv)
    else:
        inside = grid[chi2 <= chi2[k] + 1.0]
        error = max(0.5 * (inside.max() - inside.min()), step)
    return V2Extraction(float(np.clip(best, grid[0], grid[-1])), float(error), float(chi2[k]), grid, chi2)


# ---------------------------------------------------------------------------
# expected histograms


@dataclass(frozen=True)
class PeakTerm:
    offset: float  # ps, nominal delay (stop minus start)
    area: float  # expected pairs per laser cycle
    rate: float  # 1/ps, decay rate of the two-sided exponential peak


def _slot_number_dist(emitter: EmitterParams) -> dict[int, float]:
    if emitter.statistics == "single":
        return {1: 1.0 - emitter.g_multi, 2: emitter.g_multi}
    # poisson: photons are uncorrelated; pairs are handled independently
    n_max = int(emitter.mean_photons + 10 * np.sqrt(emitter.mean_photons) + 10)
    pmf = stats.poisson.pmf(np.arange(n_max + 1), emitter.mean_photons)
    return {n: float(p) for n, p in enumerate(pmf) if p > 1e-15}


def expected_peaks(
    emitter: EmitterParams,
    routing: RoutingConfig,
    network: OpticalNetwork,
    overlap: OverlapModel,
    ch_start: int,
    ch_stop: int,
    n_side_cycles: int = 2,
) -> list[PeakTerm]:
    """Expected (start, stop) tag pairs per cycle, enumerated over photon configurations.

    Within a cycle every photon-number configuration and every splitter
    routing is enumerated exactly; groups of two photons arriving together use
    the two-photon table, everything else is treated as independent photons.
    Pairs across cycles are products of mean per-cycle fluxes.
    """
    if ch_start == ch_stop:
        raise ValueError("start and stop channels must differ")
    eta2 = emitter.efficiency**2
    gamma = 1.0 / emitter.tau_r
    k_int = gamma + 2.0 * overlap.dephasing_rate
    chan = np.asarray(network.channels)
    p_start = network.single[:, chan == ch_start].sum(axis=1)
    p_stop = network.single[:, chan == ch_stop].sum(axis=1)
    delayed_mode, direct_mode = routing.arm_modes()
    s = routing.splitter_ratio
    arms = [(True, s), (False, 1.0 - s)]
    spc = emitter.slots_per_cycle
    peaks: dict[tuple[float, float], float] = {}

    def add(offset, area, rate):
        if area != 0.0:
            key = (round(float(offset), 3), rate)
            peaks[key] = peaks.get(key, 0.0) + area

    def arrival(slot, is_delayed):
        return slot * emitter.pulse_sep_ps + (routing.delay_ps if is_delayed else 0)

    flux_start: dict[int, float] = {}
    flux_stop: dict[int, float] = {}
    ndist = _slot_number_dist(emitter)
    mean_n = sum(n * p for n, p in ndist.items())
    # mean flux per nominal arrival time (first-order quantity, interference-free)
    for slot in range(spc):
        for is_delayed, w in arms:
            t = arrival(slot, is_delayed)
            mode = delayed_mode if is_delayed else direct_mode
            flux_start[t] = flux_start.get(t, 0.0) + mean_n * w * p_start[mode]
            flux_stop[t] = flux_stop.get(t, 0.0) + mean_n * w * p_stop[mode]

    if emitter.statistics == "single":
        for counts in itertools.product(sorted(ndist), repeat=spc):
            w_counts = np.prod([ndist[n] for n in counts])
            slots = [sl for sl, n in enumerate(counts) for _ in range(n)]
            for route in itertools.product(arms, repeat=len(slots)):
                w = w_counts * np.prod([r[1] for r in route])
                if w == 0:
                    continue
                photons = [
                    (arrival(sl, r[0]), delayed_mode if r[0] else direct_mode) for sl, r in zip(slots, route)
                ]
                _within_cycle(photons, network, p_start, p_stop, ch_start, ch_stop, overlap, w, gamma, k_int, add)
    else:
        # independent photons: E[n(n-1)] same-slot pairs, E[n]^2 for distinct slots
        pairs_same = sum(n * (n - 1) * p for n, p in ndist.items())
        for sa in range(spc):
            for sb in range(spc):
                w_pair = pairs_same if sa == sb else mean_n**2
                for (da, wa), (db, wb) in itertools.product(arms, arms):
                    ta, tb = arrival(sa, da), arrival(sb, db)
                    ma = delayed_mode if da else direct_mode
                    mb = delayed_mode if db else direct_mode
                    add(tb - ta, w_pair * wa * wb * p_start[ma] * p_stop[mb], gamma)

    period = emitter.rep_period_ps
    for m in range(-n_side_cycles, n_side_cycles + 1):
        if m == 0:
            continue
        for ta, fa in flux_start.items():
            for tb, fb in flux_stop.items():
                add(m * period + tb - ta, fa * fb, gamma)

    return [PeakTerm(off, area * eta2, rate) for (off, rate), area in sorted(peaks.items())]


def _within_cycle(photons, network, p_start, p_stop, ch_start, ch_stop, overlap, w, gamma, k_int, add):
    groups: dict[int, list[int]] = {}
    for idx, (t, _) in enumerate(photons):
        groups.setdefault(t, []).append(idx)
    chan = np.asarray(network.channels)
    for t, members in groups.items():
        if len(members) == 2:
            ma, mb = photons[members[0]][1], photons[members[1]][1]
            table = network.pair(ma, mb)
            modes = table.output_modes()
            hit = np.array(
                [(chan[a] == ch_start and chan[b] == ch_stop) or (chan[b] == ch_start and chan[a] == ch_stop) for a, b in modes]
            )
            p_dist = float(table.distinguishable[hit].sum())
            p_delta = float((table.identical - table.distinguishable)[hit].sum())
            add(0.0, w * p_dist, gamma)
            # interference term: (gamma/2) e^{-k|tau|} * scale = scale*gamma/k * Laplace(k)
            add(0.0, w * p_delta * overlap.scale * gamma / k_int, k_int)
    for i, (ti, mi) in enumerate(photons):
        for j, (tj, mj) in enumerate(photons):
            if i == j:
                continue
            same_pair_group = ti == tj and len(groups[ti]) == 2
            if same_pair_group:
                continue
            add(tj - ti, w * p_start[mi] * p_stop[mj], gamma)


def expected_histogram(
    peaks: list[PeakTerm],
    n_cycles: int,
    bin_width: float,
    span_ns: float,
    detector: DetectorModel = DetectorModel(),
    flat_background: float = 0.0,
    **labels,
) -> CorrelationHistogram:
    """Bin the peak terms, each blurred by the jitter of two detectors."""
    hist = CorrelationHistogram.empty(bin_width, span_ns * 1e3, **labels)
    edges = np.r_[hist.centers - 0.5 * bin_width, hist.centers[-1] + 0.5 * bin_width]
    sigma = np.sqrt(2.0) * detector.sigma_ps
    counts = np.full(len(hist.centers), flat_background * bin_width)
    for p in peaks:
        if abs(p.offset) > span_ns * 1e3 + 20.0 / p.rate + 10 * sigma:
            continue
        counts += n_cycles * p.area * np.diff(laplace_gauss_cdf(edges, p.offset, p.rate, sigma))
    return CorrelationHistogram(hist.bin_width, hist.centers, counts, **labels)


def predicted_correlation_curves(
    emitter: EmitterParams,
    circuit: CnotCircuitParams,
    input_state: str,
    output_pair: str,
    *,
    detector: DetectorModel = DetectorModel(),
    routing: RoutingConfig | None = None,
    n_cycles: int | None = None,
    bin_width: float = 25.0,
    span_ns: float = 15.0,
    network: OpticalNetwork | None = None,
) -> CorrelationHistogram:
    """Expected histogram for one <input|output> pane of the CNOT measurement."""
    inp, out = LogicalInput.parse(input_state), LogicalInput.parse(output_pair)
    routing = RoutingConfig(input_state=inp.label) if routing is None else routing
    network = cnot_network(circuit) if network is None else network
    overlap = OverlapModel.from_wavepacket(emitter.wavepacket(), circuit.V2)
    start, stop = out.control, 2 + out.target
    n_cycles = emitter.sim_pulses if n_cycles is None else n_cycles
    peaks = expected_peaks(emitter, routing, network, overlap, start, stop)
    background = _dark_background(emitter, routing, network, detector, start, stop, n_cycles)
    return expected_histogram(
        peaks, n_cycles, bin_width, span_ns, detector, background, input_state=inp.label, output_pair=out.label
    )


def _dark_background(emitter, routing, network, detector, start, stop, n_cycles) -> float:
    """Flat accidental pairs per ps of delay from dark counts."""
    if detector.dark_rate_hz <= 0:
        return 0.0
    delayed_mode, direct_mode = routing.arm_modes()
    chan = np.asarray(network.channels)
    s = routing.splitter_ratio
    mean_n = 1.0 + emitter.g_multi if emitter.statistics == "single" else emitter.mean_photons
    per_cycle = mean_n * emitter.slots_per_cycle * emitter.efficiency
    mix = s * network.single[delayed_mode] + (1 - s) * network.single[direct_mode]
    period_s = emitter.rep_period * 1e-9
    r_start = per_cycle * mix[chan == start].sum() / period_s
    r_stop = per_cycle * mix[chan == stop].sum() / period_s
    d = detector.dark_rate_hz
    duration_s = n_cycles * period_s
    return duration_s * (d * r_stop + r_start * d + d * d) * 1e-12


def chi2_test(observed: CorrelationHistogram, expected: CorrelationHistogram, min_expected: float = 5.0):
    """Pearson chi^2 over bins with enough expected counts; sparse bins pooled into one."""
    obs = np.asarray(observed.counts, dtype=float)
    exp = np.asarray(expected.counts, dtype=float)
    big = exp >= min_expected
    chi2 = float(np.sum((obs[big] - exp[big]) ** 2 / exp[big]))
    dof = int(big.sum())
    rest_o, rest_e = obs[~big].sum(), exp[~big].sum()
    if rest_e >= min_expected:
        chi2 += (rest_o - rest_e) ** 2 / rest_e
        dof += 1
    if dof == 0:
        # nothing expected anywhere: pass only if nothing was seen either
        return 0.0, 0, 1.0 if rest_o <= min_expected else 0.0
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def pane_histograms(streams, bin_width: float, span_ns: float, input_state: str) -> dict:
    """The four control-target panes of one input's tag streams."""
    out = {}
    for o in all_inputs():
        out[(input_state, o.label)] = correlate(
            streams[o.control], streams[2 + o.target], bin_width, span_ns,
            input_state=input_state, output_pair=o.label,
        )
    return out


def to_jsonable(obj):
    if is_dataclass(obj):
        return {k: to_jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table_csv(path, matrix: np.ndarray, row_labels=None, col_labels=None) -> None:
    rows = row_labels or [i.label for i in all_inputs()]
    cols = col_labels or [o.label for o in all_inputs()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input", *cols])
        for lab, row in zip(rows, np.asarray(matrix)):
            w.writerow([lab, *(f"{x:.10g}" for x in row)])


__all__ = [
    "WindowSpec",
    "peak_area",
    "truth_table_from_histograms",
    "retained_fraction",
    "extract_v1",
    "extract_v2",
    "predicted_correlation_curves",
    "expected_peaks",
    "expected_histogram",
    "chi2_test",
    "pane_histograms",
    "CHANNEL_NAMES",
]
