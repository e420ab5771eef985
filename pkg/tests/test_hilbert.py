import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dipolarxy.geometry import build_triangle_array, single_triangle_pattern
from dipolarxy.hilbert import (AtomModel, CouplingConstants, QuantumState,
                               TWO_PI, basis_state, check_state, chi_minus,
                               chi_plus, chi_state, density_from_vector,
                               embed, exact_spectrum, level_projector,
                               lightshift_hamiltonian,
                               magnetization_sector_indices, pauli_string,
                               permutation_operator, total_sigma_z,
                               transition_op, vdw_hamiltonian, w_state,
                               xy_hamiltonian)

SQRT3 = np.sqrt(3.0)


class TestStates:
    def test_w_state_is_uniform_one_excitation(self):
        w = w_state()
        nz = w.nonzero()[0]
        assert set(nz) == set(magnetization_sector_indices(3, 2))
        assert np.allclose(w[nz], 1 / SQRT3)

    def test_chi_states_from_imprint(self):
        assert np.allclose(chi_state(TWO_PI / 3), chi_plus())
        assert np.allclose(chi_state(2 * TWO_PI / 3), chi_minus())

    def test_chi_phases_are_n_phi(self):
        # atom n acquires phase n*phi; amplitudes stay 1/sqrt(3)
        phi = 0.7
        psi = chi_state(phi)
        nz = magnetization_sector_indices(3, 2)
        # nz is ordered by the flipped-atom index
        rel = psi[nz] / psi[nz][0]
        assert np.allclose(np.angle(rel) % TWO_PI,
                           [0.0, phi, 2 * phi], atol=1e-12)

    def test_zero_phase_is_w(self):
        assert np.allclose(chi_state(0.0), w_state())

    def test_basis_state_qubit(self):
        v = basis_state("ud")
        assert v.shape == (4,)
        assert v[0b01] == 1.0

    def test_basis_state_five_level(self):
        v = basis_state("ud", AtomModel.FIVE_LEVEL)
        assert v.shape == (25,)
        assert np.count_nonzero(v) == 1

    def test_check_state_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            check_state(np.array([1.0, 1.0]))

    def test_density_from_vector(self):
        rho = density_from_vector(w_state())
        check_state(rho, kind="density")
        assert np.trace(rho) == pytest.approx(1.0)


class TestOperators:
    def test_pauli_string_xx_commutes_as_expected(self):
        zz = pauli_string("zz", AtomModel.QUBIT)
        assert np.allclose(zz, np.diag([1, -1, -1, 1]))

    def test_embed_matches_pauli_string(self):
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        assert np.allclose(embed(sx, 1, 3, AtomModel.QUBIT),
                           pauli_string("1x1", AtomModel.QUBIT))

    def test_level_projectors_resolve_identity(self):
        total = sum(level_projector(AtomModel.FIVE_LEVEL, k)
                    for k in range(5))
        assert np.allclose(total, np.eye(5))

    def test_transition_op_moves_population(self):
        t = transition_op(AtomModel.FIVE_LEVEL, 2, 0)
        v = np.zeros(5)
        v[0] = 1.0
        assert np.allclose(t @ v, np.eye(5)[2])

    def test_permutation_operator_swaps_atoms(self):
        perm = np.array([1, 0])
        p = permutation_operator(perm, 2)
        assert np.allclose(p @ basis_state("ud"), basis_state("du"))

    def test_total_sigma_z_eigenvalues(self):
        z = total_sigma_z(3)
        assert sorted(np.unique(np.diag(z).real)) == [-3, -1, 1, 3]


class TestHamiltonians:
    def test_triangle_spectrum(self, triangle):
        # one-excitation eigenvalues {2J, -J, -J} MHz with J = -0.82
        term = xy_hamiltonian(triangle.positions, CouplingConstants())
        evals = exact_spectrum(term)[0] / TWO_PI
        expected = sorted([-1.64, 0.82, 0.82, -1.64, 0.82, 0.82, 0, 0])
        assert np.allclose(sorted(evals), expected, atol=1e-9)

    def test_w_is_ground_of_one_excitation_sector(self, triangle):
        term = xy_hamiltonian(triangle.positions, CouplingConstants())
        w = w_state()
        hw = term.matrix @ w
        assert np.allclose(hw, TWO_PI * (-1.64) * w, atol=1e-9)

    def test_chi_states_are_excited_eigenstates(self, triangle):
        term = xy_hamiltonian(triangle.positions, CouplingConstants())
        for chi in (chi_plus(), chi_minus()):
            assert np.allclose(term.matrix @ chi, TWO_PI * 0.82 * chi,
                               atol=1e-9)

    def test_coupling_scales_as_inverse_cube(self):
        geo1 = build_triangle_array(12.3)
        geo2 = build_triangle_array(24.6)
        c = CouplingConstants()
        e1 = exact_spectrum(xy_hamiltonian(geo1.positions, c))[0]
        e2 = exact_spectrum(xy_hamiltonian(geo2.positions, c))[0]
        assert np.allclose(e1, 8 * e2, atol=1e-9)

    def test_magnetization_conservation(self, triangle):
        h = xy_hamiltonian(triangle.positions, CouplingConstants()).matrix
        z = total_sigma_z(3)
        assert np.allclose(h @ z - z @ h, 0, atol=1e-12)

    def test_lightshift_diagonal_pattern(self, triangle_pattern):
        term = lightshift_hamiltonian(triangle_pattern, 23.0)
        h = term.matrix
        assert np.allclose(h, np.diag(np.diag(h)))
        # |ddd> (all down, last index) picks up no shift; shifts act on up
        assert h[-1, -1] == pytest.approx(0.0)

    def test_lightshift_multiplier_pattern(self, triangle_pattern):
        # atom shifts are m*delta with m = (0, 1, 2); |uuu> is index 0
        term = lightshift_hamiltonian(triangle_pattern, 23.0)
        h = np.diag(term.matrix).real / TWO_PI
        assert h[0] == pytest.approx(3 * 23.0)
        # states with exactly atom n up: 0b011, 0b101, 0b110
        assert np.allclose([h[0b011], h[0b101], h[0b110]],
                           [0.0, 23.0, 46.0], atol=1e-9)

    def test_vdw_is_small_and_diagonal(self, triangle):
        term = vdw_hamiltonian(triangle.positions, CouplingConstants())
        h = term.matrix
        assert np.allclose(h, np.diag(np.diag(h)))
        assert np.max(np.abs(np.diag(h))) / TWO_PI < 0.2

    @given(st.floats(min_value=0.0, max_value=2 * np.pi))
    @settings(max_examples=30, deadline=None)
    def test_chi_state_normalized(self, phi):
        psi = chi_state(phi)
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


class TestQuantumState:
    def test_vector_state(self):
        s = QuantumState(w_state(), AtomModel.QUBIT, 3)
        assert s.kind == "vector"

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            QuantumState(np.zeros(5), AtomModel.QUBIT, 3)
