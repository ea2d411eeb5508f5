import numpy as np
import pytest

from qdcnot.analysis import pane_histograms
from qdcnot.circuit import CnotCircuitParams, all_inputs
from qdcnot.source import DetectorModel, EmitterParams, RoutingConfig, cnot_network, derive_seed, simulate_cnot

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def simulate_all_panes(emitter, circuit, seed, inputs=None, detector=DetectorModel(), bin_width=25.0, span_ns=15.0):
    network = cnot_network(circuit)
    hists = {}
    for inp in inputs or all_inputs():
        st = simulate_cnot(
            emitter, circuit, RoutingConfig(input_state=inp.label), derive_seed(seed, inp.index),
            detector=detector, network=network,
        )
        hists.update(pane_histograms(st, bin_width, span_ns, inp.label))
    return hists


@pytest.fixture(scope="session")
def experiment_run():
    """Sixteen panes at the experimental parameters, 10^7 laser cycles per input."""
    em = EmitterParams(sim_pulses=10_000_000)
    cp = CnotCircuitParams()
    return em, cp, simulate_all_panes(em, cp, seed=20080402)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
