import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsum.simcore import (
    OutcomeDistribution,
    RegisterLayout,
    StateVector,
    apply_hadamards,
    apply_permutation,
    apply_phase_flip,
    apply_subregister_unitary,
    apply_walsh_hadamard_index_register,
    basis_state,
    make_basis_state,
    measure_distribution,
    sample_outcome,
)

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def random_state(layout, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return StateVector(layout, v / np.linalg.norm(v))


def test_layout_validation():
    with pytest.raises(ValueError):
        RegisterLayout(2, 2, 1)
    with pytest.raises(ValueError):
        RegisterLayout(3, 0, 1)
    assert RegisterLayout(5, 2, 1).m_anc == 2


def test_basis_state_examples():
    s = make_basis_state(RegisterLayout(2, 1, 1), 0, 0)
    assert np.array_equal(s.amplitudes, [1, 0, 0, 0])
    s = make_basis_state(RegisterLayout(8, 3, 5), 5, 22)
    assert np.flatnonzero(s.amplitudes).tolist() == [182]
    with pytest.raises(ValueError):
        make_basis_state(RegisterLayout(2, 1, 1), 2, 0)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2), st.data())
def test_compose_decompose_roundtrip(mp, mdp, anc, data):
    layout = RegisterLayout.minimal(mp, mdp, anc)
    i1 = data.draw(st.integers(0, 2**mp - 1))
    i2 = data.draw(st.integers(0, 2**mdp - 1))
    i3 = data.draw(st.integers(0, 2**anc - 1))
    idx = layout.compose(i1, i2, i3)
    # brute-force bit concatenation
    bits = format(i1, f"0{mp}b") + format(i2, f"0{mdp}b") + (format(i3, f"0{anc}b") if anc else "")
    assert idx == int(bits, 2)
    assert tuple(int(v) for v in layout.decompose(idx)) == (i1, i2, i3)


def test_walsh_hadamard_examples():
    layout = RegisterLayout(2, 1, 1)
    s = apply_walsh_hadamard_index_register(make_basis_state(layout, 0, 1))
    assert np.allclose(s.amplitudes, [0, 1 / np.sqrt(2), 0, 1 / np.sqrt(2)])
    layout = RegisterLayout(3, 2, 1)
    s = apply_walsh_hadamard_index_register(make_basis_state(layout, 0, 0))
    assert np.allclose(s.amplitudes, np.kron(np.kron(H, H) @ [1, 0, 0, 0], [1, 0]))
    d = measure_distribution(s)
    assert sorted(d.as_dict().values()) == pytest.approx([0.25] * 4)


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_hadamard_involution_and_norm(seed):
    layout = RegisterLayout(5, 2, 2)
    s = random_state(layout, seed)
    once = apply_walsh_hadamard_index_register(s)
    assert abs(once.norm_squared - 1) < 1e-10
    assert np.allclose(apply_walsh_hadamard_index_register(once).amplitudes, s.amplitudes, atol=1e-12)


def test_hadamards_match_kron_oracle():
    layout = RegisterLayout(3, 1, 1)
    s = random_state(layout, 3)
    I2 = np.eye(2)
    full = np.kron(np.kron(I2, H), H)  # qubits 1 and 2
    assert np.allclose(apply_hadamards(s, (1, 2)).amplitudes, full @ s.amplitudes)


def test_permutation_examples():
    layout = RegisterLayout(2, 1, 1)
    s = basis_state(layout, 0)
    assert apply_permutation(s, np.arange(4)).allclose(s)
    swapped = apply_permutation(s, np.array([1, 0, 2, 3]))
    assert np.flatnonzero(swapped.amplitudes).tolist() == [1]
    with pytest.raises(ValueError):
        apply_permutation(s, np.array([0, 0, 2, 3]))
    # J on a 5-qubit value register: x -> (32 - x) mod 32
    layout = RegisterLayout(6, 1, 5)
    i1, i2, _ = layout.basis_fields()
    J = (i1 << 5) + ((-i2) % 32)
    out = apply_permutation(make_basis_state(layout, 0, 22), J)
    assert int(layout.decompose(int(np.flatnonzero(out.amplitudes)[0]))[1]) == 10


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_permutation_is_permutation_matrix(seed):
    rng = np.random.default_rng(seed)
    layout = RegisterLayout(4, 2, 1)
    perm = rng.permutation(layout.dim)
    for b in range(layout.dim):
        out = apply_permutation(basis_state(layout, b), perm)
        assert np.count_nonzero(out.amplitudes) == 1
    s = random_state(layout, seed)
    assert abs(apply_permutation(s, perm).norm_squared - 1) < 1e-10


def test_phase_flip_examples():
    layout = RegisterLayout(2, 1, 1)
    s = basis_state(layout, 0)
    assert apply_phase_flip(s, np.ones(4)).allclose(s)
    i1 = layout.basis_fields()[0]
    flipped = apply_phase_flip(s, np.where(i1 == 0, -1.0, 1.0))
    assert flipped.amplitudes[0] == -1
    r = random_state(layout, 1)
    signs = np.array([1, -1, -1, 1.0])
    assert apply_phase_flip(apply_phase_flip(r, signs), signs).allclose(r)
    with pytest.raises(ValueError):
        apply_phase_flip(r, np.array([1, 2, 1, 1.0]))


def test_subregister_unitary_matches_kron():
    layout = RegisterLayout(3, 1, 1)
    s = random_state(layout, 7)
    U = np.array([[0, 1j], [1j, 0]]) @ H
    # act on qubits (2, 0): 2 is the most significant of the pair
    U2 = np.kron(U, H)
    full = np.zeros((8, 8), dtype=complex)
    for a in range(8):
        b0, b1, b2 = (a >> 2) & 1, (a >> 1) & 1, a & 1
        for out in range(4):
            o2, o0 = out >> 1, out & 1
            full[(o0 << 2) | (b1 << 1) | o2, a] += U2[out, (b2 << 1) | b0]
    got = apply_subregister_unitary(s, (2, 0), U2)
    assert np.allclose(got.amplitudes, full @ s.amplitudes)


def test_state_norm_is_checked():
    with pytest.raises(ValueError):
        StateVector(RegisterLayout(2, 1, 1), np.array([1, 1, 0, 0]))


def test_measure_distribution_examples():
    layout = RegisterLayout(2, 1, 1)
    d = measure_distribution(basis_state(layout, 2))
    assert d.as_dict() == {2: 1.0}
    s = StateVector(layout, np.array([1, 0, 1, 0]) / np.sqrt(2))
    assert measure_distribution(s).as_dict() == pytest.approx({0: 0.5, 2: 0.5})
    r = random_state(RegisterLayout(4, 2, 2), 0)
    assert abs(measure_distribution(r).total() - 1) < 1e-9


def test_sample_outcome():
    layout = RegisterLayout(2, 1, 1)
    assert all(sample_outcome(basis_state(layout, 3), seed) == 3 for seed in range(5))
    r = random_state(layout, 4)
    assert sample_outcome(r, 11) == sample_outcome(r, 11)


def test_sampled_frequencies_chi_square():
    from scipy.stats import chisquare

    layout = RegisterLayout(4, 2, 2)
    s = random_state(layout, 5)
    d = measure_distribution(s)
    rng = np.random.default_rng(0)
    draws = np.array(d.sample(rng, size=100_000))
    obs = np.array([np.count_nonzero(draws == o) for o in d.outcomes])
    assert chisquare(obs, d.probabilities * len(draws)).pvalue > 0.001
    uniform = apply_walsh_hadamard_index_register(basis_state(RegisterLayout(3, 2, 1), 0))
    freq = np.array([np.mean([sample_outcome(uniform, k) == o for k in range(2000)]) for o in (0, 2, 4, 6)])
    assert np.all(np.abs(freq - 0.25) < 0.04)


def test_outcome_distribution_validation():
    with pytest.raises(ValueError):
        OutcomeDistribution([0, 1], [0.5, 0.4])
    with pytest.raises(ValueError):
        OutcomeDistribution([0], [-1.0])
    d = OutcomeDistribution.from_mapping({1.0: 0.25, 2.0: 0.75})
    assert d.expectation() == pytest.approx(1.75)
    assert d.map(lambda v: v > 0).as_dict() == {True: 1.0}
