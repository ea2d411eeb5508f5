from dataclasses import replace

import numpy as np
import pytest
from conftest import simulate_all_panes
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcnot.analysis import (
    DegenerateRowError,
    ExtractionError,
    PeakTerm,
    WindowSpec,
    chi2_test,
    expected_histogram,
    extract_v1,
    extract_v2,
    peak_area,
    predicted_correlation_curves,
    retained_fraction,
    truth_table_from_histograms,
)
from qdcnot.circuit import CnotCircuitParams, LogicalInput, all_inputs, truth_table
from qdcnot.histogram import CorrelationHistogram
from qdcnot.source import DetectorModel, EmitterParams

NO_JITTER = DetectorModel(jitter_fwhm_ps=0.0)
IDEAL_SOURCE = EmitterParams(tau_c=212.0, g_multi=0.0)


def single_bin_hist(count, at=12.5, width=25.0, span=2000.0):
    h = CorrelationHistogram.empty(width, span)
    counts = np.zeros_like(h.counts)
    counts[np.argmin(np.abs(h.centers - at))] = count
    return CorrelationHistogram(h.bin_width, h.centers, counts)


def panes_from_matrix(areas):
    """Sixteen panes whose central bins hold the given 4x4 counts."""
    return {
        (i.label, o.label): single_bin_hist(int(areas[i.index, o.index]))
        for i in all_inputs()
        for o in all_inputs()
    }


def test_peak_area_single_bin():
    assert peak_area(single_bin_hist(100), WindowSpec(600.0)) == (100, 10.0)


def test_peak_area_outside_span():
    with pytest.raises(ValueError, match="outside histogram span"):
        peak_area(single_bin_hist(1, span=500.0), WindowSpec(1950.0))


def test_window_validation():
    with pytest.raises(ValueError):
        WindowSpec(0.0)


def test_truth_table_rows_and_errors():
    areas = np.array([[90, 10, 0, 0], [5, 95, 0, 0], [0, 0, 20, 80], [0, 0, 70, 30]])
    tt = truth_table_from_histograms(panes_from_matrix(areas), WindowSpec(1950.0))
    assert np.allclose(tt.entries.sum(axis=1), 1.0)
    assert tt.entries[0, 0] == pytest.approx(0.9)
    # binomial limit of the Poisson propagation
    assert tt.errors[0, 0] == pytest.approx(np.sqrt(0.9 * 0.1 / 100))
    assert tt.errors[0, 2] == 0.0
    assert np.allclose(tt.postselection_prob, 100)


def test_degenerate_row():
    areas = np.full((4, 4), 10)
    areas[2] = 0
    with pytest.raises(DegenerateRowError, match="10"):
        truth_table_from_histograms(panes_from_matrix(areas))


def test_missing_pane():
    hists = panes_from_matrix(np.ones((4, 4)))
    del hists[("11", "01")]
    with pytest.raises(KeyError):
        truth_table_from_histograms(hists)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 39), st.integers(1, 39))
def test_peak_area_monotone_in_window(seed, a, b):
    rng = np.random.default_rng(seed)
    h = CorrelationHistogram.empty(25.0, 2000.0)
    h = CorrelationHistogram(h.bin_width, h.centers, rng.poisson(3.0, h.counts.size))
    narrow, wide = sorted((a, b))
    assert peak_area(h, WindowSpec(50.0 * narrow))[0] <= peak_area(h, WindowSpec(50.0 * wide))[0]


def test_retained_fraction_of_flat_panes():
    hists = {}
    for i in all_inputs():
        for o in all_inputs():
            h = CorrelationHistogram.empty(25.0, 2000.0)
            hists[(i.label, o.label)] = CorrelationHistogram(h.bin_width, h.centers, np.ones_like(h.counts))
    assert retained_fraction(hists, WindowSpec(600.0), WindowSpec(1950.0)) == pytest.approx(24 / 78)


def test_extract_v1_counts():
    v, err = extract_v1(single_bin_hist(75), single_bin_hist(25))
    assert v == pytest.approx(0.5)
    assert err == pytest.approx(2 * np.sqrt(75 * 25 * 100) / 100**2)
    with pytest.raises(DegenerateRowError):
        extract_v1(single_bin_hist(0), single_bin_hist(0))


def test_ideal_model_pane_carries_all_coincidences():
    curves = {
        o.label: predicted_correlation_curves(
            IDEAL_SOURCE, CnotCircuitParams.ideal(), "10", o.label, detector=NO_JITTER, n_cycles=10**6
        )
        for o in all_inputs()
    }
    central = {k: peak_area(h, WindowSpec(1950.0))[0] for k, h in curves.items()}
    # only the exponential tails of the peaks at +-1.95 ns reach into the window
    assert central["11"] / sum(central.values()) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("circuit", [CnotCircuitParams.ideal(), CnotCircuitParams()])
def test_model_central_areas_reproduce_analytic_table(circuit):
    # short lifetime, no jitter, no multi-photon events: the central peaks are the analytic table
    em = EmitterParams(tau_r=30.0, tau_c=60.0, g_multi=0.0)
    hists = {
        (i.label, o.label): predicted_correlation_curves(
            em, circuit, i.label, o.label, detector=DetectorModel(jitter_fwhm_ps=1e-3), n_cycles=10**6
        )
        for i in all_inputs()
        for o in all_inputs()
    }
    measured = truth_table_from_histograms(hists, WindowSpec(1950.0)).entries
    assert np.allclose(measured, truth_table(circuit).entries, atol=1e-8)


def test_expected_histogram_area():
    h = expected_histogram([PeakTerm(0.0, 0.01, 1 / 106.0)], 1000, 25.0, 15.0)
    assert h.total == pytest.approx(10.0, rel=1e-6)


@pytest.mark.parametrize("v1", [0.5, 0.97])
def test_v1_closed_loop(v1):
    circuit = CnotCircuitParams.ideal().replace(V1=v1)
    hists = simulate_all_panes(
        replace(IDEAL_SOURCE, sim_pulses=2_000_000), circuit, seed=31, inputs=[LogicalInput.parse("00")],
        detector=NO_JITTER,
    )
    v, err = extract_v1(hists[("00", "00")], hists[("00", "01")])
    assert abs(v - v1) < 2 * err


@pytest.mark.parametrize("v2", [0.0, 1.0])
def test_v2_closed_loop_ideal(v2):
    circuit = CnotCircuitParams.ideal().replace(V2=v2)
    control1 = [LogicalInput.parse("10"), LogicalInput.parse("11")]
    hists = simulate_all_panes(
        replace(IDEAL_SOURCE, sim_pulses=2_000_000), circuit, seed=32, inputs=control1, detector=NO_JITTER
    )
    fit = extract_v2(hists, circuit)
    assert abs(fit.value - v2) < max(2 * fit.error, 0.01)


def test_v2_closed_loop_experimental(experiment_run):
    em, circuit, hists = experiment_run
    fit = extract_v2(hists, circuit, emitter=em)
    assert abs(fit.value - circuit.V2) < 2 * fit.error
    assert 0.0 < fit.error < 0.05
    # the bare circuit model ignores multi-photon events and jitter tails and reads low
    assert extract_v2(hists, circuit).value < fit.value


def test_v2_rejects_inconsistent_data():
    # control-1 rows that never flip the target cannot come from the circuit
    areas = np.full((4, 4), 100)
    areas[2, 2] = areas[3, 3] = 5000
    with pytest.raises(ExtractionError):
        extract_v2(panes_from_matrix(areas), CnotCircuitParams())


def test_chi2_test_behaviour(rng):
    h = CorrelationHistogram.empty(25.0, 2000.0)
    expected = CorrelationHistogram(h.bin_width, h.centers, np.full(h.counts.size, 50.0))
    drawn = CorrelationHistogram(h.bin_width, h.centers, rng.poisson(50.0, h.counts.size))
    _, dof, p = chi2_test(drawn, expected)
    assert dof == h.counts.size and p > 0.001
    doubled = CorrelationHistogram(h.bin_width, h.centers, 2 * drawn.counts)
    assert chi2_test(doubled, expected)[2] < 1e-6
    empty = CorrelationHistogram(h.bin_width, h.centers, np.zeros(h.counts.size))
    assert chi2_test(h, empty) == (0.0, 0, 1.0)


@pytest.mark.slow
def test_estimators_are_consistent_over_seeds():
    """V1 and V2 from 20 independent runs scatter around the inputs as their errors say."""
    em = EmitterParams(sim_pulses=10_000_000)
    circuit = CnotCircuitParams()
    inputs = [LogicalInput.parse(s) for s in ("00", "10", "11")]
    v1s, v2s = [], []
    for seed in range(20):
        hists = simulate_all_panes(em, circuit, seed=1000 + seed, inputs=inputs)
        v1s.append(extract_v1(hists[("00", "00")], hists[("00", "01")]))
        fit = extract_v2(hists, circuit, emitter=em)
        v2s.append((fit.value, fit.error))
    for values, truth in ((np.array(v1s), circuit.V1), (np.array(v2s), circuit.V2)):
        est, err = values[:, 0], values[:, 1]
        se = est.std(ddof=1) / np.sqrt(len(est))
        assert abs(est.mean() - truth) < 2 * max(se, err.mean() / np.sqrt(len(est)))
        assert np.mean(np.abs(est - truth) < 2 * err) >= 0.8
