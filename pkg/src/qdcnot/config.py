"""Run configuration: one YAML document covering emitter, circuit, routing, detector and analysis."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .analysis import WindowSpec
from .circuit import CnotCircuitParams
from .photonstats import PEAK_MODELS
from .source import DetectorModel, EmitterParams, RoutingConfig

DEFAULT_SEED = 20080402


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class AnalysisConfig:
    windows_ps: tuple[float, ...] = (1950.0, 600.0)
    bin_width_ps: float = 25.0
    span_ns: float = 15.0
    g2_span_ns: float = 40.0
    peak_model: str = "laplace_gauss"

    def __post_init__(self):
        if not self.windows_ps:
            raise ValueError("at least one analysis window is required")
        for w in self.windows_ps:
            WindowSpec(w)
        if self.bin_width_ps <= 0 or self.span_ns <= 0 or self.g2_span_ns <= 0:
            raise ValueError("bin width and spans must be positive")
        if max(self.windows_ps) > 2e3 * self.span_ns:
            raise ValueError("analysis window wider than the histogram span")
        if self.peak_model not in PEAK_MODELS:
            raise ValueError(f"unknown peak model {self.peak_model!r}; choose from {sorted(PEAK_MODELS)}")
        for w in self.windows_ps:
            steps = 0.5 * w / self.bin_width_ps
            if abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"window {w} ps does not end on bin edges; half-width must be a multiple of the bin width")

    @property
    def windows(self) -> list[WindowSpec]:
        return [WindowSpec(w) for w in self.windows_ps]


@dataclass(frozen=True)
class RunConfig:
    seed: int
    emitter: EmitterParams = field(default_factory=EmitterParams)
    circuit: CnotCircuitParams = field(default_factory=CnotCircuitParams)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    detector: DetectorModel = field(default_factory=DetectorModel)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    out: str = "results"

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2**64)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["analysis"]["windows_ps"] = list(self.analysis.windows_ps)
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**{f.name: getattr(self, f.name) for f in fields(self)}, **changes})


_SECTIONS = {
    "emitter": EmitterParams,
    "circuit": CnotCircuitParams,
    "routing": RoutingConfig,
    "detector": DetectorModel,
    "analysis": AnalysisConfig,
}


def _build(cls, data, section):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    if "windows_ps" in data:
        data = {**data, "windows_ps": tuple(float(w) for w in data["windows_ps"])}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def config_from_dict(data: dict, seed: int | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - set(_SECTIONS) - {"seed", "out"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    seed = data.get("seed") if seed is None else seed
    if seed is None:
        raise ConfigError("a seed is required (set 'seed' in the config or pass --seed)")
    parts = {name: _build(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    try:
        return RunConfig(seed=seed, out=str(data.get("out", "results")), **parts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, seed: int | None = None) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return config_from_dict(data or {}, seed)


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, seed)


DEFAULT_CONFIG_HEADER = """\
# Run configuration. Times: tau_r, tau_c, jitter, bin width, windows in ps;
# rep_period, pulse_sep, control_delay, spans in ns.
#
# seed                 integer, required; fixes every random number of a run
# out                  output directory
# emitter.tau_r        radiative lifetime
# emitter.tau_c        coherence time (at most 2 * tau_r)
# emitter.g_multi      probability that an excitation yields two photons
# emitter.efficiency   lumped collection and detection efficiency per photon
# emitter.sim_pulses   laser cycles per run
# emitter.double_pulse two excitations per cycle, pulse_sep apart
# emitter.statistics   single | poisson (poisson uses mean_photons)
# circuit.R13, R12     measured cross-coupling ratios of the 1/3 and 1/2 couplers
# circuit.V1, V2       one- and two-photon interference visibilities
# routing.splitter_ratio  probability of the delayed (control) arm; 0 or 1 pins one arm
# routing.input_state  logical input prepared by the fibre routing (correlations command)
# detector.*           Gaussian timing jitter (FWHM), dark count rate, dead time
# analysis.windows_ps  coincidence windows centred on zero delay
# analysis.peak_model  side-peak shape for the multi-photon fit:
#                      laplace_gauss | lorentzian | gaussian
"""


def default_config_yaml(seed: int = DEFAULT_SEED) -> str:
    return DEFAULT_CONFIG_HEADER + RunConfig(seed=seed).to_yaml()
