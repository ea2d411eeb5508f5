"""Simulation and analysis of a post-selected photonic CNOT gate driven by a quantum-dot source."""

from .analysis import (
    WindowSpec,
    extract_v1,
    extract_v2,
    peak_area,
    predicted_correlation_curves,
    truth_table_from_histograms,
)
from .circuit import CnotCircuitParams, LogicalInput, TruthTable, success_vs_v2, truth_table
from .config import RunConfig, load_config
from .histogram import CorrelationHistogram, correlate
from .photonstats import estimate_g2, estimate_multiphoton_g, hom_visibility
from .source import DetectorModel, EmitterParams, RoutingConfig, simulate_cnot, simulate_hbt, simulate_hom
from .wavepacket import WavepacketParams, coincidence_density, hom_dip_counts, integrated_visibility

__version__ = "0.1.0"
