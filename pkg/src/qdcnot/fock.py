"""Few-photon Fock states and their evolution through passive linear optics.

Photons live in composite modes ``spatial * n_internal + internal``. Transfer
matrices act on the spatial index only; the internal index is a label that
detectors cannot see and which encodes how distinguishable photons are.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

N_MAX = 2
PRUNE = 1e-14
UNITARITY_TOL = 1e-12


class CapacityError(ValueError):
    """Raised when a state carries more photons than the configured cap."""


@dataclass(frozen=True)
class ModeId:
    spatial: int
    internal: int = 0

    def composite(self, n_internal: int) -> int:
        if not 0 <= self.internal < n_internal:
            raise IndexError(f"internal label {self.internal} outside 0..{n_internal - 1}")
        return self.spatial * n_internal + self.internal

    @classmethod
    def from_composite(cls, index: int, n_internal: int) -> "ModeId":
        return cls(*divmod(index, n_internal))


@dataclass(frozen=True)
class FockState:
    """Occupation numbers over composite modes."""

    occupations: tuple[int, ...]

    def __post_init__(self):
        if any(n < 0 for n in self.occupations):
            raise ValueError("occupations must be non-negative")

    @property
    def total_photons(self) -> int:
        return sum(self.occupations)

    def creation_modes(self) -> list[int]:
        """Composite mode of every photon, with repetition."""
        return [m for m, n in enumerate(self.occupations) for _ in range(n)]

    @classmethod
    def from_modes(cls, modes: Iterable[int], n_modes: int) -> "FockState":
        occ = [0] * n_modes
        for m in modes:
            occ[m] += 1
        return cls(tuple(occ))


def _norm_factor(occupations: Sequence[int]) -> float:
    return math.sqrt(math.prod(math.factorial(n) for n in occupations))


@dataclass(frozen=True)
class StateVector:
    n_spatial: int
    n_internal: int
    amplitudes: Mapping[FockState, complex]

    @property
    def n_modes(self) -> int:
        return self.n_spatial * self.n_internal

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def photon_numbers(self) -> set[int]:
        return {s.total_photons for s in self.amplitudes}

    @classmethod
    def vacuum(cls, n_spatial: int, n_internal: int = 1) -> "StateVector":
        return cls(n_spatial, n_internal, {FockState((0,) * (n_spatial * n_internal)): 1.0 + 0j})

    @classmethod
    def from_photons(
        cls,
        n_spatial: int,
        n_internal: int,
        photons: Sequence[Mapping[ModeId, complex]],
        normalize: bool = True,
    ) -> "StateVector":
        """Build ``prod_k (sum_m c_km a_m^dagger) |0>``.

        Each entry of ``photons`` is the single-photon wavefunction of one
        creation operator, written as coefficients over ``ModeId``.
        """
        n_modes = n_spatial * n_internal
        terms = [[(m.composite(n_internal), complex(c)) for m, c in p.items()] for p in photons]
        amps: dict[FockState, complex] = defaultdict(complex)
        for choice in itertools.product(*terms):
            coeff = math.prod(c for _, c in choice)
            state = FockState.from_modes((m for m, _ in choice), n_modes)
            amps[state] += coeff * _norm_factor(state.occupations)
        out = cls(n_spatial, n_internal, _prune(amps))
        if normalize:
            nrm = out.norm()
            if nrm == 0:
                raise ValueError("photon wavefunctions produce the zero vector")
            out = cls(n_spatial, n_internal, {s: a / nrm for s, a in out.amplitudes.items()})
        return out


def _prune(amps: Mapping[FockState, complex]) -> dict[FockState, complex]:
    return {s: a for s, a in amps.items() if abs(a) > PRUNE}


@dataclass(frozen=True)
class TransferMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transfer matrix must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "TransferMatrix":
        return TransferMatrix(self.matrix.conj().T)

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix.conj().T - np.eye(self.dim))))

    def is_unitary(self, tol: float = UNITARITY_TOL) -> bool:
        return self.unitarity_error() < tol

    @classmethod
    def identity(cls, dim: int) -> "TransferMatrix":
        return cls(np.eye(dim))


@dataclass(frozen=True)
class CouplerSpec:
    """A directional coupler between two spatial modes.

    ``reflectivity`` is the cross-coupling probability. A coupler with
    reflectivity 1 is a waveguide crossing: it swaps the two modes.
    """

    mode_a: int
    mode_b: int
    reflectivity: float
    label: str = ""

    def __post_init__(self):
        if self.mode_a == self.mode_b:
            raise ValueError("coupler needs two distinct modes")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity {self.reflectivity} outside [0, 1]")


def coupler_unitary(spec: CouplerSpec, total_modes: int) -> TransferMatrix:
    """Embed ``[[sqrt(T), sqrt(R)], [sqrt(R), -sqrt(T)]]`` on ``(mode_a, mode_b)``."""
    if total_modes < 2:
        raise ValueError("need at least two modes")
    for m in (spec.mode_a, spec.mode_b):
        if not 0 <= m < total_modes:
            raise IndexError(f"mode {m} outside 0..{total_modes - 1}")
    r = math.sqrt(spec.reflectivity)
    t = math.sqrt(1.0 - spec.reflectivity)
    u = np.eye(total_modes, dtype=complex)
    a, b = spec.mode_a, spec.mode_b
    u[a, a], u[a, b] = t, r
    u[b, a], u[b, b] = r, -t
    return TransferMatrix(u)


def phase_shift(mode: int, phase: float, total_modes: int) -> TransferMatrix:
    u = np.eye(total_modes, dtype=complex)
    u[mode, mode] = np.exp(1j * phase)
    return TransferMatrix(u)


def compose(matrices: Sequence[TransferMatrix]) -> TransferMatrix:
    """Product in application order: ``matrices[0]`` acts first."""
    if not matrices:
        raise ValueError("nothing to compose")
    dim = matrices[0].dim
    out = np.eye(dim, dtype=complex)
    for m in matrices:
        if m.dim != dim:
            raise ValueError(f"dimension mismatch: {m.dim} != {dim}")
        out = m.matrix @ out
    return TransferMatrix(out)


def evolve(state: StateVector, u: TransferMatrix, n_max: int = N_MAX) -> StateVector:
    """Send every creation operator ``a_m^dagger`` to ``sum_n U[n, m] a_n^dagger``.

    Internal labels ride along unchanged.
    """
    if u.dim != state.n_spatial:
        raise ValueError(f"matrix acts on {u.dim} modes, state has {state.n_spatial}")
    if max(state.photon_numbers(), default=0) > n_max:
        raise CapacityError(f"state holds more than n_max={n_max} photons")
    d = state.n_internal
    n_modes = state.n_modes
    mat = u.matrix
    out: dict[FockState, complex] = defaultdict(complex)
    for fock, amp in state.amplitudes.items():
        modes = fock.creation_modes()
        pref = amp / _norm_factor(fock.occupations)
        # column of U for each photon, keeping its internal label
        cols = []
        for m in modes:
            spatial, internal = divmod(m, d)
            col = mat[:, spatial]
            cols.append([(n * d + internal, col[n]) for n in range(state.n_spatial) if col[n] != 0])
        for choice in itertools.product(*cols):
            coeff = pref * math.prod(c for _, c in choice)
            target = FockState.from_modes((m for m, _ in choice), n_modes)
            out[target] += coeff * _norm_factor(target.occupations)
    return StateVector(state.n_spatial, d, _prune(out))


def output_distribution(state: StateVector) -> dict[tuple[int, ...], float]:
    """Spatial occupation pattern -> probability, summed over internal labels."""
    d = state.n_internal
    probs: dict[tuple[int, ...], float] = defaultdict(float)
    for fock, amp in state.amplitudes.items():
        occ = np.asarray(fock.occupations).reshape(state.n_spatial, d).sum(axis=1)
        probs[tuple(int(n) for n in occ)] += abs(amp) ** 2
    return dict(probs)


def permanent(matrix) -> complex:
    """Permanent by Ryser's formula with Gray-code subset updates."""
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    prev_gray = 0
    for k in range(1, 2**n):
        gray = k ^ (k >> 1)
        changed = gray ^ prev_gray
        j = changed.bit_length() - 1
        if gray & changed:
            row_sums += a[:, j]
        else:
            row_sums -= a[:, j]
        prev_gray = gray
        # (-1)^(n - |S|) with |S| = popcount(gray)
        s = -1 if (n - bin(gray).count("1")) % 2 else 1
        total += s * np.prod(row_sums)
    return complex(total)


def permanent_amplitude(u: TransferMatrix, inputs: Sequence[int], outputs: Sequence[int]) -> complex:
    """Amplitude <outputs|U|inputs> for identical photons given as occupation lists."""
    rows = [m for m, n in enumerate(outputs) for _ in range(n)]
    cols = [m for m, n in enumerate(inputs) for _ in range(n)]
    if len(rows) != len(cols):
        return 0j
    sub = u.matrix[np.ix_(rows, cols)]
    return permanent(sub) / (_norm_factor(inputs) * _norm_factor(outputs))


def occupation_patterns(n_modes: int, n_photons: int) -> list[tuple[int, ...]]:
    return [
        FockState.from_modes(c, n_modes).occupations
        for c in itertools.combinations_with_replacement(range(n_modes), n_photons)
    ]
