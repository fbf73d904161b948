import math
from dataclasses import replace

import numpy as np
import pytest

from qwgates.basis import (
    SPIN_DOWN,
    SPIN_UP,
    MaterialParams,
    QuantumNumbers,
    alpha_ratio,
    build_landau_basis,
    hole_conjugate,
    single_particle_energy,
)
from qwgates.coulomb import build_coulomb_table
from qwgates.fewbody import (
    SINGLET,
    TRIPLET,
    EmptyBlockError,
    PairBlock,
    ResponseModel,
    ResponseTable,
    SystemResponse,
    TableMismatchError,
    TrionBlock,
    assemble_hamiltonian,
    build_pair_basis,
    build_trion_basis,
    crossing_estimate,
    diagonalize,
)

PARAMS = MaterialParams()


@pytest.fixture(scope="module")
def small_basis():
    return build_landau_basis(2, 3)


@pytest.fixture(scope="module")
def small_table(small_basis):
    return build_coulomb_table(small_basis, alpha_ratio(PARAMS.L, 2.0))


class TestPairBasis:
    def test_single_orbital(self):
        basis = build_landau_basis(1, 1)
        pairs = build_pair_basis(basis, 0)
        assert len(pairs) == 1
        assert (pairs[0].e_orb, pairs[0].h_orb) == (0, 0)
        assert (pairs[0].e_spin, pairs[0].h_spin) == (SPIN_UP, SPIN_DOWN)

    def test_unreachable_lz_is_empty(self):
        basis = build_landau_basis(1, 2)  # l in {0, 1}
        assert build_pair_basis(basis, 5) == []

    def test_lowest_level_block(self):
        basis = build_landau_basis(1, 3)
        pairs = build_pair_basis(basis, 0)
        # brute force: hole label must carry the same l as the electron
        ls = [q.l for q in basis.states]
        expected = {(i, j) for i in range(3) for j in range(3)
                    if ls[i] == ls[j]}
        assert {(p.e_orb, p.h_orb) for p in pairs} == expected


class TestTrionBasis:
    def test_single_orbital_singlet_forced(self):
        basis = build_landau_basis(1, 1)
        configs = build_trion_basis(basis, 0, SINGLET)
        assert len(configs) == 1
        assert (configs[0].e1, configs[0].e2, configs[0].h_orb) == (0, 0, 0)

    def test_single_orbital_triplet_empty(self):
        basis = build_landau_basis(1, 1)
        assert build_trion_basis(basis, 0, TRIPLET) == []

    @pytest.mark.parametrize("sector", [SINGLET, TRIPLET])
    @pytest.mark.parametrize("lz", [-1, 0, 1])
    def test_counts_match_brute_force(self, small_basis, sector, lz):
        ls = [q.l for q in small_basis.states]
        n = small_basis.size
        count = 0
        for a in range(n):
            for b in range(a, n):
                if sector == TRIPLET and a == b:
                    continue
                for h in range(n):
                    if ls[a] + ls[b] - ls[h] == lz:
                        count += 1
        assert len(build_trion_basis(small_basis, lz, sector)) == count


class TestAssembly:
    def test_interaction_off_gives_single_particle_sums(self, small_basis,
                                                        small_table):
        p0 = replace(PARAMS, beta_coeff=0.0)
        configs = build_trion_basis(small_basis, 0, SINGLET)
        H = assemble_hamiltonian(configs, 2.0, p0, small_table)
        assert np.abs(H - np.diag(np.diag(H))).max() == 0.0
        ebar = {}
        for i, q in enumerate(small_basis.states):
            up = single_particle_energy(q.with_spin(SPIN_UP), "electron", 2.0, p0)
            dn = single_particle_energy(q.with_spin(SPIN_DOWN), "electron", 2.0, p0)
            ebar[i] = 0.5 * (up + dn)
        for idx, c in enumerate(configs):
            hole = hole_conjugate(small_basis.states[c.h_orb]).with_spin(SPIN_DOWN)
            expected = ebar[c.e1] + ebar[c.e2] + single_particle_energy(
                hole, "hole", 2.0, p0)
            assert H[idx, idx] == pytest.approx(expected, rel=1e-14)

    def test_two_by_two_block_matches_closed_form(self):
        basis = build_landau_basis(2, 1)  # orbitals (0,0) and (0,-1)
        table = build_coulomb_table(basis, alpha_ratio(PARAMS.L, 3.0))
        pairs = build_pair_basis(basis, 0)
        assert len(pairs) == 2
        H = assemble_hamiltonian(pairs, 3.0, PARAMS, table)
        a, d, b = H[0, 0], H[1, 1], H[0, 1]
        mean, radius = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
        expected = np.array([mean - radius, mean + radius])
        got = np.linalg.eigvalsh(H)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_hermitian_by_construction(self, small_basis, small_table):
        for block in (build_pair_basis(small_basis, 0),
                      build_trion_basis(small_basis, 0, SINGLET),
                      build_trion_basis(small_basis, 1, TRIPLET)):
            H = assemble_hamiltonian(block, 2.0, PARAMS, small_table)
            assert np.abs(H - H.T).max() == 0.0

    def test_empty_block_signalled(self, small_table):
        with pytest.raises(EmptyBlockError):
            assemble_hamiltonian([], 2.0, PARAMS, small_table)

    def test_table_mismatch_signalled(self, small_basis):
        other = build_coulomb_table(build_landau_basis(1, 2), 0.5)
        with pytest.raises(TableMismatchError):
            assemble_hamiltonian(build_pair_basis(small_basis, 0), 2.0,
                                 PARAMS, other)

    def test_spin_adapted_blocks_reproduce_determinant_spectrum(
            self, small_basis, small_table):
        """S_z = 0 determinant enumeration as an independent oracle."""
        B = 2.0
        beta = PARAMS.beta(B)
        ls = [q.l for q in small_basis.states]
        n = small_basis.size

        def eps_e(i, s):
            return single_particle_energy(
                small_basis.states[i].with_spin(s), "electron", B, PARAMS)

        def eps_h(j):
            hole = hole_conjugate(small_basis.states[j]).with_spin(SPIN_DOWN)
            return single_particle_energy(hole, "hole", B, PARAMS)

        def vee(a, b, c, d):
            if ls[a] + ls[b] != ls[c] + ls[d]:
                return 0.0
            return small_table.integrals[small_table.pair_index(a, c),
                                         small_table.pair_index(b, d)]

        def meh(p_, q_, g, h):
            if ls[p_] - ls[g] != ls[q_] - ls[h]:
                return 0.0
            return small_table.integrals[small_table.pair_index(p_, q_),
                                         small_table.pair_index(g, h)]

        for lz in (0, 1):
            dets = [(u, v, h) for u in range(n) for v in range(n)
                    for h in range(n) if ls[u] + ls[v] - ls[h] == lz]
            H = np.zeros((len(dets), len(dets)))
            for i, (u, v, g) in enumerate(dets):
                for j, (up, vp, h) in enumerate(dets):
                    val = beta * vee(u, v, up, vp) if g == h else 0.0
                    if v == vp:
                        val -= beta * meh(u, up, g, h)
                    if u == up:
                        val -= beta * meh(v, vp, g, h)
                    if i == j:
                        val += eps_e(u, SPIN_UP) + eps_e(v, SPIN_DOWN) + eps_h(g)
                    H[i, j] = val
            reference = np.sort(np.linalg.eigvalsh(H))
            merged = np.sort(np.concatenate([
                np.linalg.eigvalsh(assemble_hamiltonian(
                    build_trion_basis(small_basis, lz, SINGLET), B, PARAMS,
                    small_table)),
                np.linalg.eigvalsh(assemble_hamiltonian(
                    build_trion_basis(small_basis, lz, TRIPLET), B, PARAMS,
                    small_table)),
            ]))
            np.testing.assert_allclose(merged, reference, atol=1e-9)


class TestDiagonalize:
    def test_identity(self):
        result = diagonalize(np.eye(4))
        np.testing.assert_allclose(result.energies, np.ones(4))

    def test_sorted(self):
        result = diagonalize(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(result.energies, [1.0, 2.0, 3.0])

    def test_matches_characteristic_polynomial(self):
        rng = np.random.default_rng(7)
        H = rng.normal(size=(6, 6))
        H = 0.5 * (H + H.T)
        # Faddeev-LeVerrier coefficients from traces of powers
        coeffs = [1.0]
        power = np.eye(6)
        traces = []
        for k in range(1, 7):
            power = power @ H
            traces.append(np.trace(power))
            c = -sum(traces[k - 1 - j] * coeffs[j] for j in range(k)) / k
            coeffs.append(c)
        roots = np.sort(np.roots(coeffs).real)
        result = diagonalize(H)
        np.testing.assert_allclose(result.energies, roots, atol=1e-8)

    def test_orthonormal_and_residual(self):
        rng = np.random.default_rng(11)
        H = rng.normal(size=(12, 12))
        H = 0.5 * (H + H.T)
        result = diagonalize(H)
        gram = result.vectors.T @ result.vectors
        assert np.abs(gram - np.eye(12)).max() < 1e-10
        residual = H @ result.vectors - result.vectors * result.energies
        assert np.abs(residual).max() <= 1e-8 * np.abs(H).max()

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestVariationalMonotonicity:
    def test_ground_energy_never_rises_with_cutoff(self):
        B = 2.0
        energies = []
        for per_level in (2, 3, 4):
            basis = build_landau_basis(2, per_level)
            table = build_coulomb_table(basis, alpha_ratio(PARAMS.L, B))
            block = build_trion_basis(basis, 0, SINGLET)
            energies.append(np.linalg.eigvalsh(
                assemble_hamiltonian(block, B, PARAMS, table))[0])
        assert energies[1] <= energies[0] + 1e-8
        assert energies[2] <= energies[1] + 1e-8


class TestResponse:
    def test_uncorrelated_limit_concentrates_bright_amplitude(self):
        # one orbital per level: the lowest pair is unique, so at beta = 0
        # the ground state is a single configuration and P_X = 1
        model = ResponseModel(replace(PARAMS, beta_coeff=0.0), levels=3,
                              per_level=1)
        response = model.response(2.0)
        assert response.P_X == pytest.approx(1.0, abs=1e-12)

    def test_omega_e_is_lowest_spin_down_electron(self):
        model = ResponseModel(levels=2, per_level=2)
        expected = single_particle_energy(
            QuantumNumbers(0, 0, SPIN_DOWN), "electron", 1.0, model.params)
        assert model.response(1.0).omega_e == expected

    def test_amplitudes_real_and_finite(self):
        model = ResponseModel(levels=2, per_level=3)
        r = model.response(3.0)
        for value in (r.omega_X, r.omega_T, r.omega_e, r.P_X, r.P_T):
            assert np.isfinite(value)
        assert r.P_X > 0.0
        assert r.P_T > 0.0

    def test_binding_signs_and_order(self):
        model = ResponseModel(levels=3, per_level=4)
        bind = model.binding(2.0)
        assert bind.singlet < 0.0
        assert bind.triplet < 0.0
        assert abs(bind.singlet) > abs(bind.triplet)

    def test_interaction_off_leaves_no_binding(self):
        model = ResponseModel(replace(PARAMS, beta_coeff=0.0), levels=2,
                              per_level=2)
        bind = model.binding(2.0)
        assert bind.singlet == pytest.approx(0.0, abs=1e-10)
        assert bind.triplet == pytest.approx(0.0, abs=1e-10)


class TestCrossingEstimate:
    def test_linear_branches(self):
        samples = [(b, -1.0 - 0.1 * b, -0.58 - 0.11 * b) for b in range(1, 11)]
        # branches meet where -1 - 0.1 B = -0.58 - 0.11 B -> B = 42
        assert crossing_estimate(samples) == pytest.approx(42.0, abs=1e-9)

    def test_parallel_branches(self):
        samples = [(b, -1.0 - 0.1 * b, -0.5 - 0.1 * b) for b in range(1, 11)]
        assert crossing_estimate(samples) is None

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            crossing_estimate([(1.0, -1.0, -0.5)])


class TestResponseTable:
    def _table(self):
        B = np.array([1.0, 2.0, 3.0, 4.0])
        rows = np.stack([
            np.array([10.0 + b, 12.0 + b, 5.0 + b, 1.0 / b, 0.5 / b])
            for b in B
        ])
        return ResponseTable(B, rows)

    def test_interpolates_through_nodes(self):
        table = self._table()
        r = table(3.0)
        assert r.omega_X == pytest.approx(13.0, rel=1e-12)
        assert r.P_T == pytest.approx(0.5 / 3.0, rel=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            self._table()(9.0)

    def test_single_point_table(self):
        table = ResponseTable(np.array([2.0]),
                              np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]))
        assert not table.interpolable
        assert table(2.0).omega_X == 1.0
        with pytest.raises(ValueError):
            table(2.5)

    def test_csv_roundtrip_is_lossless(self, tmp_path):
        table = self._table()
        path = tmp_path / "response.csv"
        table.to_csv(path)
        loaded = ResponseTable.from_csv(path)
        np.testing.assert_array_equal(loaded.B, table.B)
        np.testing.assert_array_equal(loaded.rows, table.rows)
