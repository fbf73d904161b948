"""Exciton and negative-trion blocks: bases, assembly, diagonalization.

Blocks are labelled by total angular momentum L_z = sum of the particles'
own l values (hole labels conjugated from the shared electron basis, so a
hole tagged with basis orbital j carries l = -l_j).  Two-electron spin
structure is handled in a spin-adapted S_z = 0 basis: singlet-like configs
are symmetric orbital pairs a <= b, triplet-like ones antisymmetric pairs
a < b; the electron Zeeman term then cancels identically.

Interaction matrix elements reduce to gathers from a CoulombTable, scaled
by beta(B), so per-field work is a sparse scatter plus one dense
diagonalization per block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .basis import (
    SPIN_DOWN,
    SPIN_UP,
    LandauBasis,
    MaterialParams,
    QuantumNumbers,
    build_landau_basis,
    hole_conjugate,
    single_particle_energy,
    alpha_ratio,
)
from .coulomb import CoulombTable, ThetaTable, MAIN_GRID, CHECK_GRID, build_coulomb_table

SINGLET = "singlet"
TRIPLET = "triplet"


class EmptyBlockError(ValueError):
    """Assembly or ground-state extraction was asked for an empty block."""


class TableMismatchError(KeyError):
    """CoulombTable does not cover the basis/alpha the block needs."""


@dataclass(frozen=True)
class PairConfig:
    """Electron-hole pair; h_orb labels the conjugated hole orbital."""

    e_orb: int
    h_orb: int
    e_spin: float = SPIN_UP
    h_spin: float = SPIN_DOWN


@dataclass(frozen=True)
class TrionConfig:
    """Two electrons in an S_z = 0 spin-adapted pair plus one hole.

    e1 <= e2 for singlet-like configs (equal allowed), e1 < e2 for
    triplet-like ones; the antisymmetry sign convention follows this
    canonical ordering.
    """

    e1: int
    e2: int
    h_orb: int
    sector: str = SINGLET
    h_spin: float = SPIN_DOWN

    def __post_init__(self):
        if self.sector not in (SINGLET, TRIPLET):
            raise ValueError(f"unknown spin sector {self.sector!r}")
        if self.e1 > self.e2 or (self.sector == TRIPLET and self.e1 == self.e2):
            raise ValueError("electron orbitals must be canonically ordered")


@dataclass
class SpectrumResult:
    energies: np.ndarray  # ascending, meV
    vectors: np.ndarray   # orthonormal columns over the block basis


def build_pair_basis(basis: LandauBasis, L_z: int, spin_rule: str = "bright"):
    """All electron-hole pairs with l_e - l_h-label = L_z.

    The bright rule pins spins to (e up, h down), matching the
    left-polarized recombination channel.
    """
    if basis.size == 0:
        raise ValueError("basis must be non-empty")
    if spin_rule == "bright":
        spins = (SPIN_UP, SPIN_DOWN)
    elif spin_rule == "dark":
        spins = (SPIN_DOWN, SPIN_UP)
    else:
        raise ValueError(f"unknown spin rule {spin_rule!r}")
    ls = [q.l for q in basis.states]
    return [
        PairConfig(i, j, *spins)
        for i in range(basis.size)
        for j in range(basis.size)
        if ls[i] - ls[j] == L_z
    ]


def build_trion_basis(basis: LandauBasis, L_z: int, spin_sector: str,
                      h_spin: float = SPIN_DOWN):
    """Pauli-allowed two-electron + hole configs at total L_z, one sector."""
    if basis.size == 0:
        raise ValueError("basis must be non-empty")
    if spin_sector not in (SINGLET, TRIPLET):
        raise ValueError(f"unknown spin sector {spin_sector!r}")
    ls = [q.l for q in basis.states]
    out = []
    for a in range(basis.size):
        b0 = a if spin_sector == SINGLET else a + 1
        for b in range(b0, basis.size):
            for h in range(basis.size):
                if ls[a] + ls[b] - ls[h] == L_z:
                    out.append(TrionConfig(a, b, h, spin_sector, h_spin))
    return out


def diagonalize(H: np.ndarray, hermiticity_tol: float = 1e-10) -> SpectrumResult:
    """Full eigendecomposition of a Hermitian block, ascending energies."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    dev = np.abs(H - H.conj().T).max() if H.size else 0.0
    scale = max(1.0, np.abs(H).max()) if H.size else 1.0
    if dev > hermiticity_tol * scale:
        raise ValueError(f"matrix is not Hermitian: max deviation {dev:.3e}")
    energies, vectors = np.linalg.eigh(H)
    return SpectrumResult(energies=energies, vectors=vectors)


def _spin_averaged_electron_energies(basis, B, p):
    up = np.array([
        single_particle_energy(q.with_spin(SPIN_UP), "electron", B, p)
        for q in basis.states
    ])
    dn = np.array([
        single_particle_energy(q.with_spin(SPIN_DOWN), "electron", B, p)
        for q in basis.states
    ])
    return 0.5 * (up + dn)


def _hole_energies(basis, B, p, h_spin):
    return np.array([
        single_particle_energy(hole_conjugate(q).with_spin(h_spin), "hole", B, p)
        for q in basis.states
    ])


def _check_table(table: CoulombTable, basis: LandauBasis):
    if table.basis.states != basis.states:
        raise TableMismatchError("CoulombTable was built for a different basis")


class PairBlock:
    """Assembly plan for one exciton block."""

    def __init__(self, basis: LandauBasis, configs: list[PairConfig]):
        if not configs:
            raise EmptyBlockError("pair block is empty")
        self.basis = basis
        self.configs = configs
        spins = {(c.e_spin, c.h_spin) for c in configs}
        if len(spins) != 1:
            raise ValueError("pair block must have uniform spins")
        self.e_spin, self.h_spin = spins.pop()
        self.e = np.array([c.e_orb for c in configs])
        self.h = np.array([c.h_orb for c in configs])
        if max(self.e.max(), self.h.max()) >= basis.size:
            raise TableMismatchError(
                "configs reference orbitals outside the basis")

    def hamiltonian(self, B: float, p: MaterialParams, table: CoulombTable):
        _check_table(table, self.basis)
        e_en = np.array([
            single_particle_energy(self.basis.states[i].with_spin(self.e_spin),
                                   "electron", B, p)
            for i in range(self.basis.size)
        ])
        h_en = _hole_energies(self.basis, B, p, self.h_spin)
        n = len(self.configs)
        pim = _pair_index_matrix(table)
        p1 = pim[self.e[:, None], self.e[None, :]]
        p2 = pim[self.h[:, None], self.h[None, :]]
        H = -p.beta(B) * table.integrals[p1, p2]
        H[np.diag_indices(n)] += e_en[self.e] + h_en[self.h]
        return H


def _pair_index_matrix(table: CoulombTable):
    cached = getattr(table, "_pim", None)
    if cached is None:
        size = table.basis.size
        cached = np.empty((size, size), dtype=np.intp)
        for i in range(size):
            for k in range(size):
                cached[i, k] = table.pair_index(i, k)
        table._pim = cached
    return cached


class TrionBlock:
    """Assembly plan for one trion block (fixed L_z, fixed spin sector).

    The interaction is precomputed as flat scatter lists mapping entries of
    the CoulombTable integral matrix into the block Hamiltonian; only the
    gathered values change with B (through alpha and beta).
    """

    def __init__(self, basis: LandauBasis, configs: list[TrionConfig]):
        if not configs:
            raise EmptyBlockError("trion block is empty")
        sectors = {c.sector for c in configs}
        h_spins = {c.h_spin for c in configs}
        if len(sectors) != 1 or len(h_spins) != 1:
            raise ValueError("trion block must have a uniform sector and hole spin")
        self.basis = basis
        self.configs = configs
        self.sector = sectors.pop()
        self.h_spin = h_spins.pop()
        self.sgn = 1.0 if self.sector == SINGLET else -1.0
        self.a = np.array([c.e1 for c in configs])
        self.b = np.array([c.e2 for c in configs])
        self.h = np.array([c.h_orb for c in configs])
        if max(self.a.max(), self.b.max(), self.h.max()) >= basis.size:
            raise TableMismatchError(
                "configs reference orbitals outside the basis")
        # uniform normalization: |ab> = N (|a up, b dn> + sgn |b up, a dn>),
        # with N = 1/2 reproducing the single determinant when a == b
        self.norm = np.where(self.a == self.b, 0.5, 1.0 / math.sqrt(2.0))
        self._plan = None

    def _build_plan(self, table: CoulombTable):
        pim = _pair_index_matrix(table)
        n = len(self.configs)
        a, b, h, N = self.a, self.b, self.h, self.norm
        nn = N[:, None] * N[None, :]
        terms = []  # (flat_rows, p1_flat, p2_flat, coeff_flat)

        def add(mask, p1, p2, coeff):
            idx = np.nonzero(mask.ravel())[0]
            if idx.size:
                terms.append((idx, p1.ravel()[idx], p2.ravel()[idx],
                              coeff.ravel()[idx]))

        # electron-electron: direct + sgn * exchange, only between configs
        # sharing the hole
        same_h = h[:, None] == h[None, :]
        coef_ee = 2.0 * nn
        add(same_h, pim[a[:, None], a[None, :]], pim[b[:, None], b[None, :]], coef_ee)
        add(same_h, pim[a[:, None], b[None, :]], pim[b[:, None], a[None, :]],
            self.sgn * coef_ee)

        # electron-hole: expand both configs over their determinants;
        # each determinant pair contributes a spectator-up and spectator-down
        # channel.  Equal-orbital singlets double their single determinant,
        # consistent with N = 1/2.
        p2_hole = pim[h[:, None], h[None, :]]
        for swap_r, sign_r in ((False, 1.0), (True, self.sgn)):
            x, y = (b, a) if swap_r else (a, b)
            for swap_c, sign_c in ((False, 1.0), (True, self.sgn)):
                u, v = (b, a) if swap_c else (a, b)
                coeff = -(sign_r * sign_c) * nn
                add(y[:, None] == v[None, :], pim[x[:, None], u[None, :]],
                    p2_hole, coeff)
                add(x[:, None] == u[None, :], pim[y[:, None], v[None, :]],
                    p2_hole, coeff)
        return terms

    def hamiltonian(self, B: float, p: MaterialParams, table: CoulombTable):
        _check_table(table, self.basis)
        if self._plan is None:
            self._plan = self._build_plan(table)
        n = len(self.configs)
        beta = p.beta(B)
        flat = np.zeros(n * n)
        I = table.integrals
        for idx, p1, p2, coeff in self._plan:
            np.add.at(flat, idx, beta * coeff * I[p1, p2])
        H = flat.reshape(n, n)
        # accumulation order differs between (i, j) and (j, i); symmetrize
        # the <= 1 ulp mismatch away
        H = 0.5 * (H + H.T)
        ebar = _spin_averaged_electron_energies(self.basis, B, p)
        h_en = _hole_energies(self.basis, B, p, self.h_spin)
        H[np.diag_indices(n)] += ebar[self.a] + ebar[self.b] + h_en[self.h]
        return H


def assemble_hamiltonian(block, B: float, p: MaterialParams, table: CoulombTable):
    """Hermitian block Hamiltonian in meV for a pair or trion config list."""
    if not block:
        raise EmptyBlockError("cannot assemble an empty block")
    if isinstance(block[0], PairConfig):
        return PairBlock(table.basis, list(block)).hamiltonian(B, p, table)
    if isinstance(block[0], TrionConfig):
        return TrionBlock(table.basis, list(block)).hamiltonian(B, p, table)
    raise TypeError(f"unsupported block element {type(block[0]).__name__}")


@dataclass(frozen=True)
class SystemResponse:
    """Field-dependent inputs of the effective polariton model."""

    omega_X: float
    omega_T: float
    omega_e: float
    P_X: float
    P_T: float

    def as_row(self):
        return [self.omega_X, self.omega_T, self.omega_e, self.P_X, self.P_T]


@dataclass(frozen=True)
class BindingEnergies:
    """Signed trion binding energies E_b = E_trion - (omega_X + omega_e)."""

    singlet: float
    triplet: float
    reference: float  # omega_X + omega_e

    @property
    def magnitudes(self):
        return abs(self.singlet), abs(self.triplet)


class ResponseModel:
    """Shared machinery for field scans: basis, theta tables, block plans.

    `bright_trion` selects the (L_z, sector) block whose ground state feeds
    the effective model; the default is the singlet block, the trion ground
    state below the singlet-triplet crossing, which has a non-vanishing
    bright decay amplitude onto the first orbital.  Binding energies use
    the L_z=0 singlet and the bound (dark) triplet, which in this label
    convention sits at L_z=+1.
    """

    def __init__(self, params: MaterialParams | None = None, levels: int = 3,
                 per_level: int = 6, *, bright_trion=(0, SINGLET),
                 triplet_lz: int = +1, include_zeeman: bool = True,
                 bright_amplitude: str = "lowest"):
        if bright_amplitude not in ("lowest", "sum"):
            raise ValueError(f"unknown bright_amplitude {bright_amplitude!r}")
        self.bright_amplitude = bright_amplitude
        self.params = params or MaterialParams()
        if not include_zeeman:
            self.params = replace(self.params, g_e_intercept=0.0,
                                  g_e_slope=0.0, g_h_slope=0.0)
        self.basis = build_landau_basis(levels, per_level)
        self._theta_main = ThetaTable(self.basis, MAIN_GRID)
        self._theta_check = ThetaTable(self.basis, CHECK_GRID)
        self.exciton_block = PairBlock(self.basis, build_pair_basis(self.basis, 0))
        self.singlet_block = TrionBlock(
            self.basis, build_trion_basis(self.basis, 0, SINGLET))
        self.triplet_block = TrionBlock(
            self.basis, build_trion_basis(self.basis, triplet_lz, TRIPLET))
        lz, sector = bright_trion
        if (lz, sector) == (0, SINGLET):
            self.bright_block = self.singlet_block
        else:
            self.bright_block = TrionBlock(
                self.basis, build_trion_basis(self.basis, lz, sector))
        self._table_cache: dict[float, CoulombTable] = {}

    def table(self, B: float) -> CoulombTable:
        alpha = alpha_ratio(self.params.L, B)
        hit = self._table_cache.get(alpha)
        if hit is None:
            hit = build_coulomb_table(
                self.basis, alpha,
                theta_main=self._theta_main, theta_check=self._theta_check)
            if len(self._table_cache) > 512:
                self._table_cache.clear()
            self._table_cache[alpha] = hit
        return hit

    def omega_e(self, B: float) -> float:
        return single_particle_energy(
            QuantumNumbers(0, 0, SPIN_DOWN), "electron", B, self.params)

    def exciton_ground(self, B: float):
        table = self.table(B)
        spec = diagonalize(self.exciton_block.hamiltonian(B, self.params, table))
        return spec.energies[0], spec.vectors[:, 0]

    def response(self, B: float) -> SystemResponse:
        table = self.table(B)
        omega_X, vec_X = self.exciton_ground(B)
        p_x = _bright_pair_amplitude(self.exciton_block, vec_X,
                                     mode=self.bright_amplitude)
        spec_T = diagonalize(self.bright_block.hamiltonian(B, self.params, table))
        p_t = _bright_trion_amplitude(self.bright_block, spec_T.vectors[:, 0],
                                      mode=self.bright_amplitude)
        return SystemResponse(
            omega_X=float(omega_X),
            omega_T=float(spec_T.energies[0]),
            omega_e=self.omega_e(B),
            P_X=p_x,
            P_T=p_t,
        )

    def binding(self, B: float) -> BindingEnergies:
        table = self.table(B)
        omega_X, _ = self.exciton_ground(B)
        ref = float(omega_X) + self.omega_e(B)
        e_s = np.linalg.eigvalsh(
            self.singlet_block.hamiltonian(B, self.params, table))[0]
        e_t = np.linalg.eigvalsh(
            self.triplet_block.hamiltonian(B, self.params, table))[0]
        return BindingEnergies(singlet=float(e_s) - ref, triplet=float(e_t) - ref,
                               reference=ref)


def _bright_pair_amplitude(block: PairBlock, vec: np.ndarray,
                           mode: str = "lowest") -> float:
    """Bright decay amplitude of the exciton ground state.

    "lowest" reads the amplitude on the lowest diagonal pair (1, 1bar),
    which stays bounded by 1; "sum" adds every diagonal (i, ibar) pair
    coherently (giant-oscillator-strength convention) and may exceed 1.
    The eigenvector sign is a gauge; the value is reported non-negative.
    """
    if mode == "sum":
        mask = block.e == block.h
        return float(abs(vec[mask].sum()))
    for idx in range(len(block.configs)):
        if block.e[idx] == 0 and block.h[idx] == 0:
            return float(abs(vec[idx]))
    return 0.0


def _bright_trion_amplitude(block: TrionBlock, vec: np.ndarray,
                            mode: str = "lowest",
                            left_orbital: int = 0) -> float:
    """P_T: amplitude for decay leaving the `left_orbital` spin-down electron.

    Projects the state onto determinants (x up = h_orb, y down =
    left_orbital) with hole = h_orb, i.e. configurations reachable by
    removing one bright pair.  "lowest" keeps only the fully lowest
    channel (x = hole = first orbital); "sum" adds every channel.
    """
    total = 0.0
    for w, (up_orb, dn_orb, hole), amp in _determinant_expansion(block, vec):
        if up_orb == hole and dn_orb == left_orbital:
            if mode == "sum" or up_orb == left_orbital:
                total += w * amp
    return float(abs(total))


def _determinant_expansion(block: TrionBlock, vec: np.ndarray):
    """Yield (weight, (up_orb, down_orb, hole), amplitude) over determinants."""
    for idx, cfg in enumerate(block.configs):
        amp = vec[idx]
        if cfg.e1 == cfg.e2:
            yield 1.0, (cfg.e1, cfg.e2, cfg.h_orb), amp
        else:
            n = 1.0 / math.sqrt(2.0)
            yield n, (cfg.e1, cfg.e2, cfg.h_orb), amp
            yield block.sgn * n, (cfg.e2, cfg.e1, cfg.h_orb), amp


def system_response(B: float, params: MaterialParams | None = None,
                    levels: int = 3, per_level: int = 6, **kwargs) -> SystemResponse:
    """One-off system response; scans should reuse a ResponseModel."""
    return ResponseModel(params, levels, per_level, **kwargs).response(B)


def binding_energies(B: float, params: MaterialParams | None = None,
                     levels: int = 3, per_level: int = 6, **kwargs) -> BindingEnergies:
    """One-off binding energies; scans should reuse a ResponseModel."""
    return ResponseModel(params, levels, per_level, **kwargs).binding(B)


def crossing_estimate(samples, *, degree: int = 1, tail_fraction: float = 0.7,
                      b_range=(0.0, 100.0)):
    """Extrapolated field where the two binding-energy branches intersect.

    `samples` is a sequence of (B, E_b_singlet, E_b_triplet).  Low-order
    polynomials (degree 1 by default) are fit to each branch over the
    high-field tail of the sampled window (`tail_fraction` of the B span),
    since the branches approach the crossing from their high-field
    asymptotics.  Returns the intersection field in `b_range`, preferring
    roots beyond the sampled window, or None when no real intersection
    exists.
    """
    samples = sorted(samples)
    if len(samples) < 4:
        raise ValueError("need at least 4 samples to fit the branches")
    Bv = np.array([s[0] for s in samples], dtype=float)
    cut = Bv.max() - tail_fraction * (Bv.max() - Bv.min())
    tail = [s for s in samples if s[0] >= cut - 1e-12]
    if len(tail) < degree + 2:
        tail = samples
    Bt = np.array([s[0] for s in tail], dtype=float)
    d = min(degree, len(tail) - 1)
    fit_s = np.polyfit(Bt, [s[1] for s in tail], d)
    fit_t = np.polyfit(Bt, [s[2] for s in tail], d)
    diff = np.polysub(fit_s, fit_t)
    roots = np.roots(diff) if len(diff) > 1 else np.array([])
    real = sorted(
        float(r.real)
        for r in roots
        if abs(r.imag) < 1e-9 and b_range[0] <= r.real <= b_range[1]
    )
    if not real:
        return None
    beyond = [r for r in real if r > Bv.max()]
    return beyond[0] if beyond else real[0]


class ResponseTable:
    """SystemResponse sampled on a B grid, with cubic interpolation."""

    COLUMNS = ("B", "omega_X", "omega_T", "omega_e", "P_X", "P_T")

    def __init__(self, B: np.ndarray, rows: np.ndarray):
        order = np.argsort(B)
        self.B = np.asarray(B, dtype=float)[order]
        self.rows = np.asarray(rows, dtype=float)[order]
        if self.rows.shape != (len(self.B), 5):
            raise ValueError("rows must be (len(B), 5)")
        if len(self.B) >= 2 and np.any(np.diff(self.B) <= 0):
            raise ValueError("B grid must be strictly increasing")
        self._splines = None

    @classmethod
    def compute(cls, model: ResponseModel, B_grid) -> "ResponseTable":
        rows = [model.response(float(b)).as_row() for b in B_grid]
        return cls(np.asarray(B_grid, dtype=float), np.asarray(rows))

    @property
    def interpolable(self) -> bool:
        return len(self.B) >= 2

    def __call__(self, B: float) -> SystemResponse:
        if not self.interpolable:
            if not math.isclose(B, self.B[0], rel_tol=0.0, abs_tol=1e-12):
                raise ValueError("single-point table cannot interpolate")
            return SystemResponse(*self.rows[0])
        if B < self.B[0] - 1e-9 or B > self.B[-1] + 1e-9:
            raise ValueError(
                f"B={B} outside tabulated range [{self.B[0]}, {self.B[-1]}]")
        if self._splines is None:
            k = min(3, len(self.B) - 1)
            if k == 3:
                self._splines = [CubicSpline(self.B, self.rows[:, c])
                                 for c in range(5)]
            else:
                self._splines = [
                    lambda x, c=c: np.interp(x, self.B, self.rows[:, c])
                    for c in range(5)
                ]
        return SystemResponse(*(float(s(B)) for s in self._splines))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for b, row in zip(self.B, self.rows):
                fh.write(",".join(f"{v:.16e}" for v in (b, *row)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ResponseTable":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        cols = data.dtype.names
        if cols != cls.COLUMNS:
            raise ValueError(f"unexpected response table columns {cols}")
        rows = np.stack([data[c] for c in cls.COLUMNS[1:]], axis=1)
        return cls(data["B"], rows)
