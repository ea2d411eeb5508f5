"""Event-level Monte Carlo of the quantum-dot source, fibre routing and detectors.

Random numbers come from one seed split into independent sub-streams keyed by
(purpose, block of laser cycles), so a run can be generated block by block in
any order and still reproduce the serial result bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .circuit import (
    C0,
    C1,
    T0,
    T1,
    CnotCircuitParams,
    LogicalInput,
    PairTable,
    pair_table,
    single_photon_distribution,
    unitary_pair_table,
)
from .fock import CouplerSpec, coupler_unitary
from .lineshapes import FWHM_PER_SIGMA
from .wavepacket import WavepacketParams, integrated_visibility

BLOCK_CYCLES = 1 << 16
STREAM_EMIT, STREAM_ROUTE, STREAM_DARK = 0, 1, 2
TAG_DTYPE = np.dtype([("channel", "<u1"), ("time", "<u8")])
CNOT_CHANNELS = {C0: 0, C1: 1, T0: 2, T1: 3}
CHANNEL_NAMES = ("c0", "c1", "t0", "t1")


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, block)))


def derive_seed(seed: int, *key: int) -> int:
    """Independent run seed for a sub-experiment (one logical input, one set-up)."""
    state = np.random.SeedSequence(int(seed), spawn_key=(1000, *key)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class EmitterParams:
    tau_r: float = 106.0  # ps
    tau_c: float = 148.0  # ps
    g_multi: float = 0.0063
    rep_period: float = 12.5  # ns
    pulse_sep: float = 1.95  # ns
    efficiency: float = 0.06
    sim_pulses: int = 10_000_000
    double_pulse: bool = True
    statistics: str = "single"  # or "poisson"
    mean_photons: float = 1.0  # per excitation, poisson statistics only

    def __post_init__(self):
        if self.tau_r <= 0:
            raise ValueError("tau_r must be positive")
        if not 0.0 <= self.g_multi <= 1.0:
            raise ValueError("g_multi must lie in [0, 1]")
        if not 0 < self.pulse_sep < self.rep_period:
            raise ValueError("need 0 < pulse_sep < rep_period")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.sim_pulses < 1:
            raise ValueError("sim_pulses must be positive")
        if self.statistics not in ("single", "poisson"):
            raise ValueError(f"unknown photon statistics {self.statistics!r}")
        if self.mean_photons <= 0:
            raise ValueError("mean_photons must be positive")

    @property
    def rep_period_ps(self) -> int:
        return int(round(self.rep_period * 1e3))

    @property
    def pulse_sep_ps(self) -> int:
        return int(round(self.pulse_sep * 1e3))

    @property
    def slots_per_cycle(self) -> int:
        return 2 if self.double_pulse else 1

    def wavepacket(self) -> WavepacketParams:
        return WavepacketParams(self.tau_r, self.tau_c)


@dataclass(frozen=True)
class DetectorModel:
    jitter_fwhm_ps: float = 530.0  # calibrated, see README
    dark_rate_hz: float = 0.0
    dead_time_ps: float = 0.0

    def __post_init__(self):
        if self.jitter_fwhm_ps < 0 or self.dark_rate_hz < 0 or self.dead_time_ps < 0:
            raise ValueError("detector parameters must be non-negative")

    @property
    def sigma_ps(self) -> float:
        return self.jitter_fwhm_ps / FWHM_PER_SIGMA


@dataclass(frozen=True)
class RoutingConfig:
    """Fibre splitter feeding a delayed (control) arm and a direct (target) arm.

    ``splitter_ratio`` is the probability of taking the delayed arm; 0 and 1
    pin every photon to one arm. The arm modes default to the rails of
    ``input_state`` on the CNOT chip.
    """

    splitter_ratio: float = 0.5
    control_delay: float = 1.95  # ns
    input_state: str = "00"
    delayed_mode: int | None = None
    direct_mode: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.splitter_ratio <= 1.0:
            raise ValueError("splitter_ratio must lie in [0, 1]")
        if self.control_delay < 0:
            raise ValueError("control_delay must be non-negative")
        LogicalInput.parse(self.input_state)

    @property
    def delay_ps(self) -> int:
        return int(round(self.control_delay * 1e3))

    def arm_modes(self) -> tuple[int, int]:
        c, t = LogicalInput.parse(self.input_state).modes
        delayed = c if self.delayed_mode is None else self.delayed_mode
        direct = t if self.direct_mode is None else self.direct_mode
        return delayed, direct


@dataclass(frozen=True)
class OverlapModel:
    """Interference weight ``scale * exp(-2 gamma_d |dt|)`` of a pair detected dt apart."""

    dephasing_rate: float = 0.0  # 1/ps
    scale: float = 1.0

    def __post_init__(self):
        if self.dephasing_rate < 0 or not 0.0 <= self.scale <= 1.0 + 1e-12:
            raise ValueError("overlap scale must lie in [0, 1] and dephasing rate be >= 0")

    def weight(self, dt):
        return self.scale * np.exp(-2.0 * self.dephasing_rate * np.abs(dt))

    def integrated(self, tau_r: float) -> float:
        g = 1.0 / tau_r
        return self.scale * g / (g + 2.0 * self.dephasing_rate)

    @classmethod
    def from_wavepacket(cls, wp: WavepacketParams, v2: float | None = None) -> "OverlapModel":
        """Overlap with the wavepacket's time structure, rescaled to integrate to ``v2``."""
        base = integrated_visibility(wp)
        if v2 is None:
            return cls(wp.dephasing_rate, 1.0)
        if not 0.0 <= v2 <= 1.0:
            raise ValueError("V2 must lie in [0, 1]")
        if v2 > base * (1 + 1e-12):
            raise ValueError(
                f"V2={v2} exceeds the wavepacket limit tau_c/(2 tau_r)={base:.4f}; "
                "raise tau_c or lower V2"
            )
        return cls(wp.dephasing_rate, min(v2 / base, 1.0))


@dataclass(frozen=True)
class OpticalNetwork:
    """Sampling tables of a passive network: single-photon rows and two-photon tables."""

    single: np.ndarray  # single[in_mode, out_mode]
    channels: tuple[int, ...]  # detector channel per output mode, -1 if undetected
    pairs: dict = field(default_factory=dict)  # sorted (mode, mode) -> PairTable

    @property
    def n_channels(self) -> int:
        return max(self.channels) + 1

    def pair(self, a: int, b: int) -> PairTable:
        return self.pairs[(min(a, b), max(a, b))]


def cnot_network(params: CnotCircuitParams, inputs: Sequence[int] = (C0, C1, T0, T1)) -> OpticalNetwork:
    single = np.array([single_photon_distribution(params, m) for m in range(6)])
    pairs = {(a, b): pair_table(params, (a, b)) for a in inputs for b in inputs if a <= b}
    channels = tuple(CNOT_CHANNELS.get(m, -1) for m in range(6))
    return OpticalNetwork(single, channels, pairs)


def coupler_network(reflectivity: float) -> OpticalNetwork:
    u = coupler_unitary(CouplerSpec(0, 1, reflectivity), 2)
    single = np.abs(u.matrix.T) ** 2
    pairs = {(a, b): unitary_pair_table(u, (a, b)) for a in (0, 1) for b in (0, 1) if a <= b}
    return OpticalNetwork(single, (0, 1), pairs)


@dataclass
class EmissionEvents:
    """One row per emitted photon."""

    cycle: np.ndarray
    slot: np.ndarray
    excitation_index: np.ndarray
    delay: np.ndarray  # ps after the excitation pulse
    photon_count: np.ndarray  # photons emitted by the same excitation
    emission_time: np.ndarray  # ps since run start

    def __len__(self) -> int:
        return len(self.cycle)

    @classmethod
    def concatenate(cls, parts: Sequence["EmissionEvents"]) -> "EmissionEvents":
        names = ("cycle", "slot", "excitation_index", "delay", "photon_count", "emission_time")
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in names))


def _emission_block(params: EmitterParams, seed: int, block: int, n_cycles: int) -> EmissionEvents:
    rng = block_rng(seed, STREAM_EMIT, block)
    first = block * BLOCK_CYCLES
    n_here = min(BLOCK_CYCLES, n_cycles - first)
    spc = params.slots_per_cycle
    n_slots = n_here * spc
    if params.statistics == "single":
        counts = 1 + (rng.random(n_slots) < params.g_multi).astype(np.int64)
    else:
        counts = rng.poisson(params.mean_photons, n_slots)
    excitation = first * spc + np.arange(n_slots)
    excitation = np.repeat(excitation, counts)
    count_per_photon = np.repeat(counts, counts)
    cycle, slot = np.divmod(excitation, spc)
    delay = rng.exponential(params.tau_r, size=len(excitation))
    start = cycle * params.rep_period_ps + slot * params.pulse_sep_ps
    return EmissionEvents(cycle, slot.astype(np.int8), excitation, delay, count_per_photon.astype(np.int8), start + delay)


def iter_emission_blocks(params: EmitterParams, seed: int, n_cycles: int | None = None) -> Iterator[tuple[int, EmissionEvents]]:
    n_cycles = params.sim_pulses if n_cycles is None else n_cycles
    n_blocks = -(-n_cycles // BLOCK_CYCLES)
    for block in range(n_blocks):
        yield block, _emission_block(params, seed, block, n_cycles)


def generate_emission_events(params: EmitterParams, seed: int, n_cycles: int | None = None) -> EmissionEvents:
    return EmissionEvents.concatenate([ev for _, ev in iter_emission_blocks(params, seed, n_cycles)])


def _sample_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] > cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def route_and_detect(
    events: EmissionEvents,
    routing: RoutingConfig,
    network: OpticalNetwork,
    seed: int,
    *,
    emitter: EmitterParams,
    detector: DetectorModel = DetectorModel(),
    overlap: OverlapModel = OverlapModel(),
    block: int = 0,
) -> list[np.ndarray]:
    """Route photons through splitter, delay and network; return per-channel tag times (ps).

    Photons reaching the network in the same cycle at the same nominal time
    form a group. Pairs are sampled from the two-photon table using the
    interference weight of their detection-time difference; lone photons
    (and the rare groups of three or more) use the single-photon rows.
    """
    rng = block_rng(seed, STREAM_ROUTE, block)
    n = len(events)
    u_arm, u_single, u_pair, u_det = rng.random((4, n))
    jitter = rng.normal(0.0, 1.0, n) * detector.sigma_ps

    delayed_mode, direct_mode = routing.arm_modes()
    delayed = u_arm < routing.splitter_ratio
    in_mode = np.where(delayed, delayed_mode, direct_mode)
    nominal = events.slot.astype(np.int64) * emitter.pulse_sep_ps + delayed * routing.delay_ps
    key = events.cycle * (4 * emitter.rep_period_ps) + nominal
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    starts = np.flatnonzero(np.r_[True, sorted_key[1:] != sorted_key[:-1]])
    sizes = np.diff(np.r_[starts, n])

    out_mode = np.full(n, -1, dtype=np.int64)
    det_delay = events.delay.copy()

    cdf_single = np.cumsum(network.single, axis=1)
    lone = np.ones(n, dtype=bool)
    pair_starts = starts[sizes == 2]
    if pair_starts.size:
        i, j = order[pair_starts], order[pair_starts + 1]
        lone[i] = lone[j] = False
        a, b = np.minimum(in_mode[i], in_mode[j]), np.maximum(in_mode[i], in_mode[j])
        weight = overlap.weight(events.delay[i] - events.delay[j])
        for ma, mb in sorted(set(zip(a.tolist(), b.tolist()))):
            sel = (a == ma) & (b == mb)
            table = network.pair(ma, mb)
            cdf = np.cumsum(table.mix(weight[sel]), axis=1)
            pattern = _sample_rows(cdf / cdf[:, -1:], u_pair[i[sel]])
            modes = table.output_modes()[pattern]
            out_mode[i[sel]] = modes[:, 0]
            out_mode[j[sel]] = modes[:, 1]
    out_mode[lone] = _sample_rows(cdf_single[in_mode[lone]], u_single[lone])

    channel_of_mode = np.asarray(network.channels)
    channel = channel_of_mode[out_mode]
    hit = (channel >= 0) & (u_det < emitter.efficiency)
    times = events.cycle * emitter.rep_period_ps + nominal + det_delay + jitter
    times = np.rint(times[hit]).astype(np.int64)
    channel = channel[hit]

    out = [np.sort(times[channel == ch]) for ch in range(network.n_channels)]
    if detector.dark_rate_hz > 0 and n:
        out = _add_dark_counts(out, events, emitter, detector, seed, block)
    return out


def _add_dark_counts(tags, events, emitter, detector, seed, block):
    rng = block_rng(seed, STREAM_DARK, block)
    lo = int(events.cycle.min()) * emitter.rep_period_ps
    hi = (int(events.cycle.max()) + 1) * emitter.rep_period_ps
    mean = detector.dark_rate_hz * (hi - lo) * 1e-12
    out = []
    for t in tags:
        extra = rng.integers(lo, hi, rng.poisson(mean))
        out.append(np.sort(np.concatenate([t, extra])))
    return out


def apply_dead_time(times: np.ndarray, dead_time_ps: float) -> np.ndarray:
    """Drop tags arriving within ``dead_time_ps`` of the previous kept tag."""
    if dead_time_ps <= 0 or times.size == 0:
        return times
    keep = np.zeros(times.size, dtype=bool)
    last = None
    for k, t in enumerate(times.tolist()):
        if last is None or t - last >= dead_time_ps:
            keep[k] = True
            last = t
    return times[keep]


@dataclass
class TagStreams:
    """Sorted tag times (ps) per detector channel."""

    channels: list[np.ndarray]
    n_cycles: int = 0
    names: tuple[str, ...] = ()

    def __getitem__(self, ch: int) -> np.ndarray:
        return self.channels[ch]

    @property
    def total(self) -> int:
        return int(sum(len(c) for c in self.channels))

    def records(self) -> np.ndarray:
        rec = np.empty(self.total, dtype=TAG_DTYPE)
        rec["channel"] = np.concatenate([np.full(len(c), k, dtype=np.uint8) for k, c in enumerate(self.channels)])
        rec["time"] = np.concatenate(self.channels).astype(np.uint64)
        return rec[np.argsort(rec["time"], kind="stable")]

    @classmethod
    def from_records(cls, rec: np.ndarray, n_channels: int | None = None) -> "TagStreams":
        n_channels = int(rec["channel"].max()) + 1 if n_channels is None and rec.size else (n_channels or 0)
        chans = [np.sort(rec["time"][rec["channel"] == k].astype(np.int64)) for k in range(n_channels)]
        return cls(chans)

    def write_binary(self, path) -> None:
        """9-byte little-endian records: uint8 channel, uint64 time in ps."""
        self.records().tofile(path)

    @classmethod
    def read_binary(cls, path, n_channels: int | None = None) -> "TagStreams":
        return cls.from_records(np.fromfile(path, dtype=TAG_DTYPE), n_channels)

    def write_csv(self, path) -> None:
        rec = self.records()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "time_ps"])
            w.writerows(zip(rec["channel"].tolist(), rec["time"].tolist()))

    @classmethod
    def read_csv(cls, path, n_channels: int | None = None) -> "TagStreams":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        rec = np.empty(len(data), dtype=TAG_DTYPE)
        rec["channel"], rec["time"] = data[:, 0], data[:, 1]
        return cls.from_records(rec, n_channels)


def simulate(
    emitter: EmitterParams,
    routing: RoutingConfig,
    network: OpticalNetwork,
    seed: int,
    *,
    detector: DetectorModel = DetectorModel(),
    overlap: OverlapModel = OverlapModel(),
    n_cycles: int | None = None,
    names: tuple[str, ...] = (),
) -> TagStreams:
    n_cycles = emitter.sim_pulses if n_cycles is None else n_cycles
    parts: list[list[np.ndarray]] = [[] for _ in range(network.n_channels)]
    for block, events in iter_emission_blocks(emitter, seed, n_cycles):
        tags = route_and_detect(
            events, routing, network, seed, emitter=emitter, detector=detector, overlap=overlap, block=block
        )
        for ch, t in enumerate(tags):
            parts[ch].append(t)
    chans = []
    for p in parts:
        t = np.sort(np.concatenate(p), kind="stable") if p else np.zeros(0, dtype=np.int64)
        chans.append(apply_dead_time(t, detector.dead_time_ps))
    return TagStreams(chans, n_cycles, names)


def simulate_cnot(
    emitter: EmitterParams,
    circuit: CnotCircuitParams,
    routing: RoutingConfig,
    seed: int,
    *,
    detector: DetectorModel = DetectorModel(),
    network: OpticalNetwork | None = None,
    n_cycles: int | None = None,
) -> TagStreams:
    """Full pipeline for one logical input; channels are the c0, c1, t0, t1 detectors."""
    network = cnot_network(circuit) if network is None else network
    overlap = OverlapModel.from_wavepacket(emitter.wavepacket(), circuit.V2)
    return simulate(
        emitter, routing, network, seed, detector=detector, overlap=overlap, n_cycles=n_cycles, names=CHANNEL_NAMES
    )


def hbt_routing() -> RoutingConfig:
    return RoutingConfig(splitter_ratio=0.0, control_delay=0.0, delayed_mode=0, direct_mode=0)


def hom_routing(emitter: EmitterParams) -> RoutingConfig:
    return RoutingConfig(splitter_ratio=0.5, control_delay=emitter.pulse_sep, delayed_mode=1, direct_mode=0)


def simulate_hbt(
    emitter: EmitterParams, seed: int, *, detector: DetectorModel = DetectorModel(), n_cycles: int | None = None
) -> TagStreams:
    """Autocorrelation set-up: all photons into one port of a balanced coupler."""
    return simulate(
        emitter, hbt_routing(), coupler_network(0.5), seed, detector=detector,
        overlap=OverlapModel.from_wavepacket(emitter.wavepacket()), n_cycles=n_cycles, names=("a", "b"),
    )


def simulate_hom(
    emitter: EmitterParams,
    seed: int,
    *,
    reflectivity: float = 0.5,
    v2: float | None = None,
    detector: DetectorModel = DetectorModel(),
    n_cycles: int | None = None,
) -> TagStreams:
    """Pulsed two-photon interference: splitter plus ``pulse_sep`` delay into a coupler."""
    return simulate(
        emitter, hom_routing(emitter), coupler_network(reflectivity), seed, detector=detector,
        overlap=OverlapModel.from_wavepacket(emitter.wavepacket(), v2), n_cycles=n_cycles, names=("c", "d"),
    )
