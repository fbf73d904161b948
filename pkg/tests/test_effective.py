import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qwgates.constants import HBAR_MEV_PS
from qwgates.effective import (
    EffectiveModel,
    EffectiveParams,
    IntegrationAccuracyError,
    ProductBasis,
    PulseTrain,
    evolve,
    hamiltonian_at,
    populations,
    propagator,
    propagator_profile,
    pulse_amplitude,
)
from qwgates.fewbody import SystemResponse


def make_params(omega_cavity=0.0, omega_X=1.2, omega_T=2.0, omega_e=0.7,
                P_X=0.8, P_T=0.6, g_X=1.5, g_T=0.4, omega_L=0.0, n_ph=3):
    response = SystemResponse(omega_X=omega_X, omega_T=omega_T,
                              omega_e=omega_e, P_X=P_X, P_T=P_T)
    return EffectiveParams(omega_cavity=omega_cavity, response=response,
                           g_X=g_X, g_T=g_T, omega_L=omega_L, n_ph=n_ph)


class TestPulseTrain:
    def test_empty_train_is_silent(self):
        assert pulse_amplitude(PulseTrain(), 3.3) == 0.0

    def test_peak_value(self):
        train = PulseTrain(((2.5, 1.0, 0.3),))
        assert pulse_amplitude(train, 1.0) == pytest.approx(2.5, rel=1e-14)

    def test_one_sigma_point(self):
        train = PulseTrain(((2.5, 1.0, 0.3),))
        assert pulse_amplitude(train, 1.3) == pytest.approx(
            2.5 * math.exp(-0.5), rel=1e-14)

    def test_superposition(self):
        train = PulseTrain(((1.0, 0.0, 0.5), (2.0, 1.0, 0.25)))
        t = np.array([0.0, 0.5, 1.0])
        single = [pulse_amplitude(PulseTrain((p,)), t) for p in train.pulses]
        np.testing.assert_allclose(train.amplitude(t), single[0] + single[1])

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError):
            PulseTrain(((1.0, 0.0, 0.0),))


class TestProductBasis:
    def test_dimension(self):
        assert ProductBasis(3).dim == 16
        assert ProductBasis(1).dim == 8

    def test_qudit_map_is_bijective(self):
        basis = ProductBasis(2)
        indices = basis.indices(basis.qudit_labels)
        assert len(set(indices.tolist())) == 4

    def test_leakage_complement(self):
        basis = ProductBasis(2)
        leak = basis.leakage_indices(basis.qudit_labels)
        assert len(leak) == basis.dim - 4

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            ProductBasis(1).index(("G", "1down", 5))

    def test_excitation_number_values(self):
        basis = ProductBasis(1)
        n_op = basis.excitation_number()
        assert n_op[basis.index(("G", "1down", 0))] == 0
        assert n_op[basis.index(("X", "T", 1))] == 3


class TestHamiltonian:
    def test_bare_energies_on_diagonal(self):
        p = make_params(g_X=0.0, g_T=0.0)
        H = hamiltonian_at(0.0, p, PulseTrain())
        basis = ProductBasis(p.n_ph)
        assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
        i = basis.index(("X", "T", 2))
        expected = 2 * p.omega_cavity + p.response.omega_X + (
            p.response.omega_T - p.response.omega_e)
        assert H[i, i] == pytest.approx(expected, rel=1e-14)

    def test_exciton_photon_matrix_element(self):
        p = make_params()
        basis = ProductBasis(p.n_ph)
        H = hamiltonian_at(0.3, p, PulseTrain())
        i = basis.index(("G", "1down", 1))
        j = basis.index(("X", "1down", 0))
        assert H[i, j] == pytest.approx(p.g_X * p.response.P_X, rel=1e-14)

    @given(st.floats(-50.0, 50.0))
    @settings(max_examples=20, deadline=None)
    def test_hermitian_at_any_time(self, t):
        p = make_params(omega_L=2.7)
        H = hamiltonian_at(t, p, PulseTrain(((1.5, 0.0, 1.0),)))
        assert np.abs(H - H.conj().T).max() < 1e-14

    def test_detunings(self):
        p = make_params(omega_cavity=1.0)
        assert p.delta_X == pytest.approx(0.2)
        assert p.delta_T == pytest.approx(0.3)


class TestEvolve:
    def test_diagonal_phase_evolution(self):
        p = make_params(g_X=0.0, g_T=0.0, omega_X=1.7)
        basis = ProductBasis(p.n_ph)
        psi0 = np.zeros(basis.dim, dtype=complex)
        i = basis.index(("X", "1down", 0))
        psi0[i] = 1.0
        traj = evolve(psi0, 0.0, 2.0, 1e-3, p)
        final = traj.final
        assert np.abs(np.abs(final[i]) - 1.0) < 1e-12
        expected_phase = -1.7 * 2.0 / HBAR_MEV_PS
        assert np.angle(final[i]) == pytest.approx(
            math.remainder(expected_phase, 2 * math.pi), abs=1e-9)

    def test_resonant_rabi_half_period(self):
        # full transfer at t = pi*hbar/(2G) for G = 1 meV: 1.0339 ps
        p = make_params(omega_cavity=2.0, omega_X=2.0, omega_T=50.0,
                        P_X=1.0, g_X=1.0, P_T=0.0, g_T=0.5)
        basis = ProductBasis(p.n_ph)
        psi0 = np.zeros(basis.dim, dtype=complex)
        psi0[basis.index(("X", "1down", 0))] = 1.0
        t_half = math.pi * HBAR_MEV_PS / 2.0
        assert t_half == pytest.approx(1.0339, abs=2e-4)
        traj = evolve(psi0, 0.0, t_half, 1e-3, p)
        pops = populations(traj.final,
                           [("G", "1down", 1), ("X", "1down", 0)], basis)
        assert pops[0] == pytest.approx(1.0, abs=1e-3 * 1e-3)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(3)
        for _ in range(4):
            p = make_params(
                omega_cavity=rng.uniform(-1, 1), omega_X=rng.uniform(-1, 1),
                omega_T=rng.uniform(-1, 1), omega_e=rng.uniform(-1, 1),
                P_X=rng.uniform(0.2, 1.2), P_T=rng.uniform(0.2, 1.2),
                g_X=rng.uniform(0.2, 1.5), g_T=rng.uniform(0.1, 0.8),
                n_ph=int(rng.integers(1, 4)))
            basis = ProductBasis(p.n_ph)
            psi0 = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
            psi0 /= np.linalg.norm(psi0)
            tf = 3.0
            traj = evolve(psi0, 0.0, tf, 1e-3, p)
            H = hamiltonian_at(0.0, p, PulseTrain())
            expected = expm(-1j * H * tf / HBAR_MEV_PS) @ psi0
            assert np.abs(traj.final - expected).max() < 1e-8

    def test_rk4_order(self):
        p = make_params()
        basis = ProductBasis(p.n_ph)
        psi0 = np.zeros(basis.dim, dtype=complex)
        psi0[basis.index(("G", "T", 0))] = 1.0
        H = hamiltonian_at(0.0, p, PulseTrain())
        exact = expm(-1j * H * 1.0 / HBAR_MEV_PS) @ psi0
        errors = []
        for dt in (4e-2, 2e-2):
            traj = evolve(psi0, 0.0, 1.0, dt, p)
            errors.append(np.linalg.norm(traj.final - exact))
        ratio = errors[0] / errors[1]
        assert 12.0 < ratio < 20.0

    def test_norm_drift_raises_when_too_coarse(self):
        p = make_params(omega_X=80.0, omega_T=95.0, g_X=3.0)
        basis = ProductBasis(p.n_ph)
        psi0 = np.zeros(basis.dim, dtype=complex)
        psi0[basis.index(("X", "1down", 0))] = 1.0
        with pytest.raises(IntegrationAccuracyError):
            evolve(psi0, 0.0, 10.0, 0.2, p, norm_tol=1e-12)

    def test_undriven_excitation_number_conserved(self):
        p = make_params()
        basis = ProductBasis(p.n_ph)
        rng = np.random.default_rng(5)
        psi0 = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        psi0 /= np.linalg.norm(psi0)
        traj = evolve(psi0, 0.0, 5.0, 1e-3, p, stride=100)
        n_op = basis.excitation_number()
        values = np.einsum("ti,i,ti->t", traj.states.conj(), n_op,
                           traj.states).real
        assert np.abs(values - values[0]).max() < 1e-8

    def test_driven_breaks_block_structure_but_keeps_norm(self):
        p = make_params(omega_L=0.5)
        basis = ProductBasis(p.n_ph)
        psi0 = np.zeros(basis.dim, dtype=complex)
        psi0[0] = 1.0
        traj = evolve(psi0, 0.0, 4.0, 1e-3, p,
                      train=PulseTrain(((2.0, 2.0, 0.5),)))
        assert abs(np.linalg.norm(traj.final) - 1.0) < 1e-8


class TestShiftedFrame:
    def test_propagators_differ_by_excitation_phase(self):
        p = make_params(omega_cavity=1.1, omega_X=1.4, omega_T=2.2,
                        omega_e=0.6, omega_L=1.0, n_ph=2)
        ref = 0.9
        train = PulseTrain(((1.2, 1.0, 0.4),))
        basis = ProductBasis(p.n_ph)
        labels = basis.qudit_labels
        tf = 3.0
        U_lab, _ = propagator(p, train, tf, 1e-3, labels)
        U_rot, _ = propagator(p.shifted(ref), train, tf, 1e-3, labels)
        n_op = basis.excitation_number()[basis.indices(labels)]
        phases = np.exp(1j * ref * n_op * tf / HBAR_MEV_PS)
        np.testing.assert_allclose(np.diag(phases) @ U_lab, U_rot, atol=1e-7)


class TestPropagator:
    def test_zero_hamiltonian_gives_identity(self):
        p = make_params(omega_cavity=0.0, omega_X=0.0, omega_T=0.0,
                        omega_e=0.0, g_X=0.0, g_T=0.0)
        basis = ProductBasis(p.n_ph)
        U, cols = propagator(p, PulseTrain(), 1.0, 1e-3, basis.qudit_labels)
        np.testing.assert_allclose(U, np.eye(4), atol=1e-12)

    def test_diagonal_model_gives_pure_phases(self):
        p = make_params(g_X=0.0, g_T=0.0)
        basis = ProductBasis(p.n_ph)
        U, _ = propagator(p, PulseTrain(), 2.0, 1e-3, basis.qudit_labels)
        off = U - np.diag(np.diag(U))
        assert np.abs(off).max() < 1e-12
        assert np.abs(np.abs(np.diag(U)) - 1.0).max() < 1e-10

    def test_subunitarity_under_drive(self):
        rng = np.random.default_rng(9)
        for _ in range(3):
            p = make_params(omega_L=rng.uniform(-1, 1))
            train = PulseTrain(tuple(
                (rng.uniform(-3, 3), rng.uniform(0, 3), rng.uniform(0.1, 1))
                for _ in range(2)))
            basis = ProductBasis(p.n_ph)
            U, _ = propagator(p, train, 3.0, 1e-3, basis.qudit_labels)
            s = np.linalg.svd(U, compute_uv=False)
            assert s.max() <= 1.0 + 1e-8

    def test_profile_endpoint_matches_propagator(self):
        p = make_params(omega_L=0.3)
        train = PulseTrain(((1.0, 1.0, 0.3),))
        basis = ProductBasis(p.n_ph)
        U, _ = propagator(p, train, 2.0, 1e-3, basis.qudit_labels)
        times, samples = propagator_profile(p, train, 2.0, 1e-3,
                                            basis.qudit_labels, stride=37)
        assert times[-1] == pytest.approx(2.0)
        np.testing.assert_allclose(samples[-1], U, atol=1e-12)


class TestPopulations:
    def test_basis_state(self):
        basis = ProductBasis(1)
        psi = np.zeros(basis.dim, dtype=complex)
        psi[basis.index(("G", "T", 0))] = 1.0
        pops = populations(psi, basis.labels, basis)
        assert pops[basis.index(("G", "T", 0))] == 1.0
        assert pops.sum() == pytest.approx(1.0)

    def test_equal_superposition(self):
        basis = ProductBasis(1)
        psi = np.zeros(basis.dim, dtype=complex)
        psi[basis.index(("G", "T", 0))] = 1 / math.sqrt(2)
        psi[basis.index(("X", "1down", 0))] = 1j / math.sqrt(2)
        pops = populations(psi, [("G", "T", 0), ("X", "1down", 0)], basis)
        np.testing.assert_allclose(pops, [0.5, 0.5])
