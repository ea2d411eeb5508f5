"""The six-mode post-selected CNOT network and its truth table.

Spatial modes, top to bottom::

    0 aC   control ancilla (vacuum input)
    1 c0   control |0>
    2 c1   control |1>
    3 t0   target |0>
    4 t1   target |1>
    5 aT   target ancilla (vacuum input)

The target qubit runs through a Mach-Zehnder interferometer made of the two
one-half couplers. Its arms meet the c1 rail and the two ancillas at one-third
couplers. Each one-third coupler is followed by a waveguide crossing so that
the logical rail continues on the cross-coupled port; with the fixed
``[[sqrt(T), sqrt(R)], [sqrt(R), -sqrt(T)]]`` convention this is the port
assignment that makes the post-selected action a CNOT.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fock import (
    CouplerSpec,
    ModeId,
    StateVector,
    TransferMatrix,
    compose,
    coupler_unitary,
    evolve,
    output_distribution,
    phase_shift,
)

AC, C0, C1, T0, T1, AT = range(6)
N_SPATIAL = 6
N_INTERNAL = 2
MODE_NAMES = ("aC", "c0", "c1", "t0", "t1", "aT")
LOGICAL_STATES = ("00", "01", "10", "11")
CONTROL_MODES = (C0, C1)
TARGET_MODES = (T0, T1)
DEPHASING_PHASES = tuple(k * np.pi / 2 for k in range(4))
# output patterns in truth-table column order |00>, |01>, |10>, |11>
COINCIDENCE_PATTERNS = tuple(
    tuple(1 if m in (c, t) else 0 for m in range(N_SPATIAL)) for c in CONTROL_MODES for t in TARGET_MODES
)


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}={value} outside [0, 1]")


@dataclass(frozen=True)
class CnotCircuitParams:
    R13: float = 0.345
    R12: float = 0.495
    V1: float = 0.97
    V2: float = 0.67

    def __post_init__(self):
        for k, v in asdict(self).items():
            _check_unit(k, v)

    @classmethod
    def ideal(cls) -> "CnotCircuitParams":
        return cls(R13=1 / 3, R12=1 / 2, V1=1.0, V2=1.0)

    def replace(self, **changes) -> "CnotCircuitParams":
        return CnotCircuitParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class LogicalInput:
    control: int
    target: int

    def __post_init__(self):
        if self.control not in (0, 1) or self.target not in (0, 1):
            raise ValueError("logical bits must be 0 or 1")

    @classmethod
    def parse(cls, label: str) -> "LogicalInput":
        if len(label) != 2 or any(ch not in "01" for ch in label):
            raise ValueError(f"logical state label must be two bits, got {label!r}")
        return cls(int(label[0]), int(label[1]))

    @property
    def label(self) -> str:
        return f"{self.control}{self.target}"

    @property
    def index(self) -> int:
        return 2 * self.control + self.target

    @property
    def modes(self) -> tuple[int, int]:
        return CONTROL_MODES[self.control], TARGET_MODES[self.target]

    def cnot(self) -> "LogicalInput":
        return LogicalInput(self.control, self.target ^ self.control)


def all_inputs() -> list[LogicalInput]:
    return [LogicalInput.parse(s) for s in LOGICAL_STATES]


@dataclass(frozen=True)
class TruthTable:
    entries: np.ndarray
    postselection_prob: np.ndarray
    errors: np.ndarray | None = field(default=None)

    @property
    def row_success(self) -> np.ndarray:
        return np.array([self.entries[i.index, i.cnot().index] for i in all_inputs()])

    @property
    def average_success(self) -> float:
        return float(self.row_success.mean())


def build_cnot(params: CnotCircuitParams) -> list[CouplerSpec]:
    return [
        CouplerSpec(T0, T1, params.R12, "target-in 1/2"),
        CouplerSpec(C1, T0, params.R13, "control-target 1/3"),
        CouplerSpec(C1, T0, 1.0, "crossing"),
        CouplerSpec(AC, C0, params.R13, "control-ancilla 1/3"),
        CouplerSpec(AC, C0, 1.0, "crossing"),
        CouplerSpec(T1, AT, params.R13, "target-ancilla 1/3"),
        CouplerSpec(T1, AT, 1.0, "crossing"),
        CouplerSpec(T0, T1, params.R12, "target-out 1/2"),
    ]


def circuit_unitary(params: CnotCircuitParams, phase: float = 0.0) -> TransferMatrix:
    """Network unitary with an extra ``phase`` on the t0 arm inside the interferometer."""
    elements = [coupler_unitary(c, N_SPATIAL) for c in build_cnot(params)]
    elements.insert(-1, phase_shift(T0, phase, N_SPATIAL))
    return compose(elements)


def circuit_to_dict(params: CnotCircuitParams) -> dict:
    return {
        "modes": list(MODE_NAMES),
        "params": asdict(params),
        "elements": [
            {"mode_a": MODE_NAMES[c.mode_a], "mode_b": MODE_NAMES[c.mode_b], "reflectivity": c.reflectivity, "label": c.label}
            for c in build_cnot(params)
        ],
        "dephasing_mode": MODE_NAMES[T0],
    }


def circuit_to_json(params: CnotCircuitParams) -> str:
    return json.dumps(circuit_to_dict(params), indent=2)


def target_internal_state(v2: float) -> dict[int, complex]:
    """Internal wavefunction of the target photon: overlap^2 with the control photon is ``v2``."""
    _check_unit("V2", v2)
    return {0: np.sqrt(v2), 1: np.sqrt(1.0 - v2)}


def logical_to_fock(inp: LogicalInput, v2: float) -> StateVector:
    c_mode, t_mode = inp.modes
    target = {ModeId(t_mode, k): a for k, a in target_internal_state(v2).items() if a != 0}
    return StateVector.from_photons(N_SPATIAL, N_INTERNAL, [{ModeId(c_mode, 0): 1.0}, target])


def modes_to_fock(modes: Sequence[int], v2: float, n_spatial: int = N_SPATIAL) -> StateVector:
    """Two photons injected into arbitrary spatial modes with internal overlap^2 ``v2``."""
    first, second = modes
    target = {ModeId(second, k): a for k, a in target_internal_state(v2).items() if a != 0}
    return StateVector.from_photons(n_spatial, N_INTERNAL, [{ModeId(first, 0): 1.0}, target])


def _add(into: dict, dist: dict, weight: float) -> None:
    for k, p in dist.items():
        into[k] = into.get(k, 0.0) + weight * p


def apply_v1_dephasing(params: CnotCircuitParams, state: StateVector) -> dict[tuple[int, ...], float]:
    """Output distribution mixing coherent evolution with a phase-averaged one.

    The dephased part averages over phases 0, pi/2, pi, 3pi/2 on t0; with at
    most two photons in that arm only harmonics up to second order appear, so
    the four-point average is exact.
    """
    coherent = output_distribution(evolve(state, circuit_unitary(params)))
    if params.V1 == 1.0:
        return coherent
    dephased: dict = {}
    for phi in DEPHASING_PHASES:
        _add(dephased, output_distribution(evolve(state, circuit_unitary(params, phi))), 1 / len(DEPHASING_PHASES))
    out: dict = {}
    _add(out, coherent, params.V1)
    _add(out, dephased, 1.0 - params.V1)
    return out


def postselect_coincidence(dist: dict[tuple[int, ...], float]) -> tuple[np.ndarray, float]:
    """Probabilities of the four one-photon-per-qubit patterns and their sum."""
    probs = np.array([dist.get(p, 0.0) for p in COINCIDENCE_PATTERNS])
    return probs, float(probs.sum())


def input_distribution(params: CnotCircuitParams, inp: LogicalInput) -> dict[tuple[int, ...], float]:
    return apply_v1_dephasing(params, logical_to_fock(inp, params.V2))


def truth_table(params: CnotCircuitParams) -> TruthTable:
    rows, post = [], []
    for inp in all_inputs():
        probs, total = postselect_coincidence(input_distribution(params, inp))
        rows.append(probs / total)
        post.append(total)
    return TruthTable(np.array(rows), np.array(post))


def ideal_cnot_table() -> np.ndarray:
    table = np.zeros((4, 4))
    for inp in all_inputs():
        table[inp.index, inp.cnot().index] = 1.0
    return table


def success_vs_v2(params: CnotCircuitParams, v2_grid: Iterable[float]) -> dict[str, np.ndarray]:
    """Success curves over V2: control-0 mean, control-1 mean and overall mean."""
    grid = np.asarray(list(v2_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty V2 grid")
    c0, c1, avg = [], [], []
    for v in grid:
        s = truth_table(params.replace(V2=float(v))).row_success
        c0.append(s[:2].mean())
        c1.append(s[2:].mean())
        avg.append(s.mean())
    return {"v2": grid, "success_c0": np.array(c0), "success_c1": np.array(c1), "success_avg": np.array(avg)}


# Lookup tables for the Monte Carlo: pattern probabilities for photons entering
# given modes, split into the indistinguishable and fully distinguishable parts.


@dataclass(frozen=True)
class PairTable:
    patterns: tuple[tuple[int, ...], ...]
    identical: np.ndarray
    distinguishable: np.ndarray

    @classmethod
    def from_distributions(cls, ident: dict, dist: dict) -> "PairTable":
        patterns = tuple(sorted(set(ident) | set(dist)))
        return cls(
            patterns,
            np.array([ident.get(p, 0.0) for p in patterns]),
            np.array([dist.get(p, 0.0) for p in patterns]),
        )

    def mix(self, overlap: np.ndarray | float) -> np.ndarray:
        """Pattern probabilities for internal overlap^2 ``overlap`` (broadcasts)."""
        v = np.asarray(overlap, dtype=float)[..., None]
        return self.distinguishable + v * (self.identical - self.distinguishable)

    def output_modes(self) -> np.ndarray:
        """(n_patterns, 2) array with the two occupied output modes of each pattern."""
        return np.array([[m for m, n in enumerate(p) for _ in range(n)] for p in self.patterns])


def single_photon_distribution(params: CnotCircuitParams, mode: int) -> np.ndarray:
    """Output-mode probabilities for one photon entering ``mode`` (V1-averaged)."""
    state = StateVector.from_photons(N_SPATIAL, 1, [{ModeId(mode): 1.0}])
    dist = apply_v1_dephasing(params, state)
    out = np.zeros(N_SPATIAL)
    for pattern, p in dist.items():
        out[pattern.index(1)] += p
    return out


def pair_table(params: CnotCircuitParams, modes: Sequence[int]) -> PairTable:
    return PairTable.from_distributions(
        apply_v1_dephasing(params, modes_to_fock(modes, 1.0)),
        apply_v1_dephasing(params, modes_to_fock(modes, 0.0)),
    )


def unitary_pair_table(u: TransferMatrix, modes: Sequence[int]) -> PairTable:
    n = u.dim
    return PairTable.from_distributions(
        output_distribution(evolve(modes_to_fock(modes, 1.0, n), u)),
        output_distribution(evolve(modes_to_fock(modes, 0.0, n), u)),
    )
