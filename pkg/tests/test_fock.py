import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from qdcnot.fock import (
    CapacityError,
    CouplerSpec,
    FockState,
    ModeId,
    StateVector,
    TransferMatrix,
    compose,
    coupler_unitary,
    evolve,
    occupation_patterns,
    output_distribution,
    permanent,
    permanent_amplitude,
    phase_shift,
)


def two_photons(n, a, b, overlap):
    """Photon in ``a`` with internal label 0; photon in ``b`` overlapping it with probability ``overlap``."""
    second = {ModeId(b, 0): math.sqrt(overlap), ModeId(b, 1): math.sqrt(1 - overlap)}
    second = {k: v for k, v in second.items() if v}
    return StateVector.from_photons(n, 2, [{ModeId(a, 0): 1.0}, second])


def brute_permanent(a):
    n = a.shape[0]
    return sum(np.prod([a[i, p[i]] for i in range(n)]) for p in itertools.permutations(range(n)))


@given(st.floats(0.0, 1.0))
def test_coupler_is_unitary(r):
    u = coupler_unitary(CouplerSpec(1, 3, r), 5)
    assert u.is_unitary()


def test_coupler_convention():
    u = coupler_unitary(CouplerSpec(0, 1, 0.3), 2).matrix
    t = 0.7
    assert np.allclose(u, [[np.sqrt(t), np.sqrt(0.3)], [np.sqrt(0.3), -np.sqrt(t)]])


def test_full_coupling_is_a_swap():
    u = coupler_unitary(CouplerSpec(0, 2, 1.0), 3).matrix
    assert np.allclose(np.abs(u), [[0, 0, 1], [0, 1, 0], [1, 0, 0]])


def test_compose_applies_first_element_first():
    a = phase_shift(0, 0.3, 2)
    b = coupler_unitary(CouplerSpec(0, 1, 0.5), 2)
    assert np.allclose(compose([a, b]).matrix, b.matrix @ a.matrix)


def test_non_unitary_rejected_by_check():
    assert not TransferMatrix(np.array([[1.0, 0.1], [0.0, 1.0]])).is_unitary()


def test_composite_mode_round_trip():
    for idx in range(12):
        assert ModeId.from_composite(idx, 2).composite(2) == idx
    with pytest.raises(IndexError):
        ModeId(0, 2).composite(2)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_evolution_preserves_norm(n, seed, overlap):
    u = TransferMatrix(unitary_group.rvs(n, random_state=seed))
    state = two_photons(n, 0, n - 1, overlap)
    out = evolve(state, u)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    assert sum(output_distribution(out).values()) == pytest.approx(1.0, abs=1e-12)


def test_capacity_error():
    state = StateVector.from_photons(3, 1, [{ModeId(0): 1.0}] * 3)
    with pytest.raises(CapacityError):
        evolve(state, TransferMatrix.identity(3))


def test_hom_null():
    u = coupler_unitary(CouplerSpec(0, 1, 0.5), 2)
    dist = output_distribution(evolve(two_photons(2, 0, 1, 1.0), u))
    assert dist.get((1, 1), 0.0) < 1e-14
    assert dist[(2, 0)] == pytest.approx(0.5)
    assert dist[(0, 2)] == pytest.approx(0.5)


@pytest.mark.parametrize("v", [0.0, 0.25, 0.5, 0.72, 1.0])
def test_partial_overlap_law(v):
    u = coupler_unitary(CouplerSpec(0, 1, 0.5), 2)
    dist = output_distribution(evolve(two_photons(2, 0, 1, v), u))
    assert dist.get((1, 1), 0.0) == pytest.approx((1 - v) / 2, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_distinguishable_limit_is_classical(seed):
    n = 4
    u = unitary_group.rvs(n, random_state=seed)
    p = np.abs(u) ** 2
    dist = output_distribution(evolve(two_photons(n, 0, 2, 0.0), TransferMatrix(u)))
    for m, k in itertools.combinations_with_replacement(range(n), 2):
        pattern = tuple(FockState.from_modes([m, k], n).occupations)
        classical = p[m, 0] * p[k, 2] + (p[k, 0] * p[m, 2] if m != k else 0.0)
        assert dist.get(pattern, 0.0) == pytest.approx(classical, abs=1e-12)


@pytest.mark.parametrize("v", [0.1, 0.5, 0.9])
def test_mixed_and_pure_overlap_agree(v):
    u = TransferMatrix(unitary_group.rvs(5, random_state=7))
    pure = output_distribution(evolve(two_photons(5, 1, 3, v), u))
    ident = output_distribution(evolve(two_photons(5, 1, 3, 1.0), u))
    dist = output_distribution(evolve(two_photons(5, 1, 3, 0.0), u))
    for k in set(pure) | set(ident) | set(dist):
        mixed = v * ident.get(k, 0.0) + (1 - v) * dist.get(k, 0.0)
        assert pure.get(k, 0.0) == pytest.approx(mixed, abs=1e-12)


def test_permanent_small_cases():
    assert permanent(np.zeros((0, 0))) == 1
    assert permanent([[3.0]]) == 3
    a, b, c, d = 1.5, -2.0, 0.5j, 4.0
    assert permanent([[a, b], [c, d]]) == pytest.approx(a * d + b * c)
    assert permanent(np.ones((3, 3))) == pytest.approx(6)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_permanent_matches_permutation_sum(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert permanent(a) == pytest.approx(brute_permanent(a), rel=1e-10, abs=1e-10)


def test_permanent_rejects_non_square():
    with pytest.raises(ValueError):
        permanent(np.ones((2, 3)))


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_evolution_matches_permanents_for_all_two_photon_cases(n):
    u = TransferMatrix(unitary_group.rvs(n, random_state=100 + n))
    patterns = occupation_patterns(n, 2)
    for inp in patterns:
        modes = FockState(inp).creation_modes()
        state = StateVector.from_photons(n, 1, [{ModeId(m): 1.0} for m in modes])
        out = evolve(state, u)
        for outp in patterns:
            amp = out.amplitudes.get(FockState(outp), 0j)
            assert amp == pytest.approx(permanent_amplitude(u, inp, outp), abs=1e-12)


def test_occupation_pattern_count():
    assert len(occupation_patterns(6, 2)) == math.comb(7, 2)
