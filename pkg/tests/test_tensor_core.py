import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbc.tensor_core import (
    DensityMatrix,
    Party,
    StateVector,
    SubsystemLayout,
    apply_local,
    basis_state,
    is_unitary,
    matrix_to_state,
    overlap_up_to_phase,
    partial_trace,
    polar_unitary_factor,
    reduced_density_matrix,
    reshape_to_matrix,
    root_fidelity,
    schmidt_decompose,
    tensor_product,
    trace_distance,
)

import oracles

BELL = np.array([1, 0, 0, 1]) / math.sqrt(2)
L22 = SubsystemLayout.bipartite(2, 2)


def bell():
    return StateVector(BELL, L22)


def random_bipartite(d_a, d_b, rng):
    return StateVector(oracles.random_state(d_a * d_b, rng), SubsystemLayout.bipartite(d_a, d_b))


seeds = st.integers(0, 2**32 - 1)
small_dim = st.integers(1, 16)


class TestLayout:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            SubsystemLayout((2, 0), ("A", "B"))
        with pytest.raises(ValueError):
            SubsystemLayout((2, 2), ("A",))
        with pytest.raises(ValueError):
            SubsystemLayout((2,), ("Z",))

    def test_bob_side_includes_ancillas(self):
        lay = L22.append(3, Party.BOB_ANCILLA, "xi")
        assert lay.indices("B") == [1, 2]
        assert lay.party_indices("B") == [1]
        assert lay.find("xi") == 2

    def test_state_length_must_match(self):
        with pytest.raises(ValueError):
            StateVector(np.ones(3), L22)

    def test_state_is_read_only(self):
        s = bell()
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0


class TestTensorProduct:
    def test_basis_states(self):
        one = SubsystemLayout((2,), ("A",))
        two = SubsystemLayout((2,), ("B",))
        out = tensor_product(basis_state(0, one), basis_state(1, two))
        np.testing.assert_array_equal(out.amplitudes, [0, 1, 0, 0])
        assert out.layout == L22

    def test_identities(self):
        np.testing.assert_array_equal(tensor_product(np.eye(2), np.eye(2)), np.eye(4))

    def test_against_double_loop(self, rng):
        a = oracles.random_state(2, rng)
        b = oracles.random_state(3, rng)
        out = tensor_product(StateVector(a, SubsystemLayout((2,), ("A",))),
                             StateVector(b, SubsystemLayout((3,), ("B",))))
        np.testing.assert_allclose(out.amplitudes, oracles.kron_loop(a, b), atol=0, rtol=1e-15)

    def test_kind_mismatch(self):
        with pytest.raises(TypeError):
            tensor_product(bell(), np.eye(2))


class TestPartialTrace:
    def test_bell_is_maximally_mixed(self):
        np.testing.assert_allclose(partial_trace(bell(), "B").entries, np.eye(2) / 2, atol=1e-15)

    def test_product_state(self, rng):
        psi, phi = oracles.random_state(3, rng), oracles.random_state(2, rng)
        state = StateVector(np.kron(psi, phi), SubsystemLayout.bipartite(3, 2))
        np.testing.assert_allclose(partial_trace(state, "B").entries,
                                   np.outer(phi, phi.conj()), atol=1e-14)

    def test_against_index_sum(self, rng):
        s = random_bipartite(3, 4, rng)
        rho = partial_trace(s, Party.BOB).entries
        np.testing.assert_allclose(rho, oracles.reduced_bob_loop(s.amplitudes, 3, 4), atol=1e-14)

    def test_absent_party(self):
        lay = SubsystemLayout((2, 2), ("B", "Banc"))
        with pytest.raises(ValueError, match="absent"):
            partial_trace(StateVector(BELL, lay), "A")

    def test_keep_alice_on_interleaved_layout(self, rng):
        # layout [B, A]: keeping Alice must sum over the leading index
        amps = oracles.random_state(6, rng)
        s = StateVector(amps, SubsystemLayout((2, 3), ("B", "A")))
        m = amps.reshape(2, 3)
        np.testing.assert_allclose(partial_trace(s, "A").entries, m.T @ m.conj(), atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(seeds, small_dim, small_dim)
    def test_output_is_density_matrix(self, seed, d_a, d_b):
        rho = partial_trace(random_bipartite(d_a, d_b, np.random.default_rng(seed)), "B")
        assert rho.violations() == []
        assert abs(np.trace(rho.entries) - 1) <= 1e-10


class TestReshape:
    def test_single_amplitude(self):
        np.testing.assert_array_equal(reshape_to_matrix(basis_state(1, L22)), [[0, 1], [0, 0]])

    def test_bell(self):
        np.testing.assert_allclose(reshape_to_matrix(bell()), np.eye(2) / math.sqrt(2))

    @settings(max_examples=30, deadline=None)
    @given(seeds, small_dim, small_dim)
    def test_round_trip_is_exact(self, seed, d_a, d_b):
        s = random_bipartite(d_a, d_b, np.random.default_rng(seed))
        back = matrix_to_state(reshape_to_matrix(s), s.layout)
        np.testing.assert_array_equal(back.amplitudes, s.amplitudes)

    def test_round_trip_with_ancilla_and_alice_last(self, rng):
        lay = SubsystemLayout((2, 3, 2), ("B", "A", "Banc"))
        s = StateVector(oracles.random_state(12, rng), lay)
        m = reshape_to_matrix(s)
        assert m.shape == (3, 4)
        assert m[1, 2] == s.tensor()[1, 1, 0]
        np.testing.assert_array_equal(matrix_to_state(m, lay).amplitudes, s.amplitudes)


class TestSchmidt:
    def test_bell(self):
        np.testing.assert_allclose(schmidt_decompose(bell()).coefficients, [2 ** -0.5] * 2)

    def test_product_state(self, rng):
        s = StateVector(np.kron(oracles.random_state(3, rng), oracles.random_state(3, rng)),
                        SubsystemLayout.bipartite(3, 3))
        np.testing.assert_allclose(schmidt_decompose(s).coefficients, [1, 0, 0], atol=1e-14)

    def test_against_reduced_spectrum(self, rng):
        s = random_bipartite(4, 4, rng)
        lam = np.linalg.eigvalsh(oracles.reduced_bob_loop(s.amplitudes, 4, 4))
        np.testing.assert_allclose(np.sort(schmidt_decompose(s).weights), np.sort(lam), atol=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="normalized"):
            schmidt_decompose(StateVector(2 * BELL, L22))

    @settings(max_examples=40, deadline=None)
    @given(seeds, small_dim, small_dim)
    def test_invariants(self, seed, d_a, d_b):
        s = random_bipartite(d_a, d_b, np.random.default_rng(seed))
        f = schmidt_decompose(s)
        assert np.all(np.diff(f.coefficients) <= 0)
        assert abs(f.weights.sum() - 1) <= 1e-10
        r = f.coefficients.size
        np.testing.assert_allclose(f.alice_vectors.conj().T @ f.alice_vectors, np.eye(r), atol=1e-10)
        np.testing.assert_allclose(f.bob_vectors.conj().T @ f.bob_vectors, np.eye(r), atol=1e-10)
        assert overlap_up_to_phase(f.reassemble(), s) >= 1 - 1e-10
        rho_b = partial_trace(s, "B").entries
        np.testing.assert_allclose(np.sort(f.weights), np.sort(np.linalg.eigvalsh(rho_b))[-r:],
                                   atol=1e-9)


class TestPolar:
    def test_unitary_is_fixed_point(self, rng):
        u = oracles.random_unitary(4, rng)
        np.testing.assert_allclose(polar_unitary_factor(u), u, atol=1e-12)

    def test_positive_diagonal(self):
        np.testing.assert_allclose(polar_unitary_factor(np.diag([2.0, 3.0])), np.eye(2), atol=1e-15)

    def test_maximizes_real_trace(self, rng):
        c = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        best = np.trace(polar_unitary_factor(c).conj().T @ c).real
        for _ in range(1000):
            q = oracles.random_unitary(4, rng)
            assert best >= np.trace(q.conj().T @ c).real

    def test_zero_and_rank_deficient(self, rng):
        assert is_unitary(polar_unitary_factor(np.zeros((3, 3))), 1e-10)
        v = rng.standard_normal((5, 1)) + 1j * rng.standard_normal((5, 1))
        assert is_unitary(polar_unitary_factor(v @ v.conj().T), 1e-10)

    def test_deterministic(self, rng):
        c = rng.standard_normal((6, 6))
        np.testing.assert_array_equal(polar_unitary_factor(c), polar_unitary_factor(c.copy()))

    def test_requires_square(self):
        with pytest.raises(ValueError):
            polar_unitary_factor(np.ones((2, 3)))


class TestTraceDistance:
    def test_identical(self, rng):
        r = oracles.random_density(3, rng)
        assert trace_distance(r, r) == 0

    def test_orthogonal_pure(self):
        assert trace_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1, abs=1e-15)

    def test_against_general_eigensolver(self, rng):
        r0, r1 = oracles.random_density(5, rng), oracles.random_density(5, rng, rank=2)
        assert trace_distance(r0, r1) == pytest.approx(oracles.trace_distance_eig(r0, r1), abs=1e-12)

    def test_accepts_density_matrix(self, rng):
        r0 = DensityMatrix(oracles.random_density(3, rng))
        assert trace_distance(r0, r0) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            trace_distance(np.eye(2) / 2, np.eye(3) / 3)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 6))
    def test_metric(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b, c = (oracles.random_density(d, rng, rank=int(rng.integers(1, d + 1))) for _ in range(3))
        assert trace_distance(a, b) == trace_distance(b, a)
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-9
        assert 0 <= trace_distance(a, b) <= 1


class TestFidelity:
    def test_equal_and_orthogonal(self, rng):
        r = oracles.random_density(3, rng)
        assert root_fidelity(r, r) == pytest.approx(1, abs=1e-10)
        assert root_fidelity(np.diag([1, 0]), np.diag([0, 1])) == 0


class TestOverlapAndUnitary:
    def test_overlap(self, rng):
        a = oracles.random_state(6, rng)
        assert overlap_up_to_phase(a, a) == pytest.approx(1, abs=1e-15)
        assert overlap_up_to_phase(a, np.exp(0.7j) * a) == pytest.approx(1, abs=1e-15)
        assert overlap_up_to_phase([1, 0], [0, 1]) == 0
        with pytest.raises(ValueError):
            overlap_up_to_phase([1, 0], [1, 0, 0])

    def test_is_unitary(self, rng):
        assert is_unitary(np.eye(3))
        assert not is_unitary(np.diag([1, 2]))
        assert not is_unitary(np.ones((2, 3)))
        u = oracles.random_unitary(5, rng) @ oracles.random_unitary(5, rng)
        assert is_unitary(u, 1e-10)

    def test_apply_local_matches_kron(self, rng):
        s = random_bipartite(3, 2, rng)
        u = oracles.random_unitary(2, rng)
        np.testing.assert_allclose(apply_local(u, s, [1]).amplitudes,
                                   np.kron(np.eye(3), u) @ s.amplitudes, atol=1e-14)
        w = oracles.random_unitary(3, rng)
        np.testing.assert_allclose(apply_local(w, s, [0]).amplitudes,
                                   np.kron(w, np.eye(2)) @ s.amplitudes, atol=1e-14)

    def test_reduced_density_on_subset(self, rng):
        lay = SubsystemLayout((2, 2, 3), ("A", "B", "Banc"))
        s = StateVector(oracles.random_state(12, rng), lay)
        t = s.tensor()
        expected = np.einsum("abc,abd->cd", t, t.conj())
        np.testing.assert_allclose(reduced_density_matrix(s, [2]).entries, expected, atol=1e-14)
