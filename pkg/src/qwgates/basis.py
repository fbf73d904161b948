"""Landau-level single-particle basis and field-dependent energies.

Orbitals are labelled (n, l) with n the radial quantum number and l the
z-projection of angular momentum.  Electron levels are degenerate in the
cyclotron number 2n + |l| - l, so level k (0-based) collects states with
2n + |l| - l = 2k.  Hole states are obtained from electron labels by
conjugation (n, l, s) -> (n, -l, -s); in terms of their own quantum
numbers holes then carry the cyclotron number 2n + |l| + l, which keeps
conjugated states degenerate level by level.

Units: energies meV, fields tesla, lengths nm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from .constants import (
    ELECTRON_MASS_MEV_PS2_PER_NM2,
    HBAR_MEV_PS,
    MU_B_MEV_PER_T,
    magnetic_length_nm,
)

ParticleKind = Literal["electron", "hole"]

SPIN_UP = 0.5
SPIN_DOWN = -0.5


@dataclass(frozen=True, order=True)
class QuantumNumbers:
    """Single-particle labels (n, l, s); s may be None for a bare orbital."""

    n: int
    l: int
    s: float | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"radial quantum number must be >= 0, got {self.n}")
        if self.s is not None and self.s not in (SPIN_UP, SPIN_DOWN):
            raise ValueError(f"spin z-component must be +1/2 or -1/2, got {self.s}")

    def with_spin(self, s: float) -> "QuantumNumbers":
        return QuantumNumbers(self.n, self.l, s)


def hole_conjugate(q: QuantumNumbers) -> QuantumNumbers:
    """Map an electron label to the conjugated hole label (n, -l, -s)."""
    s = None if q.s is None else -q.s
    return QuantumNumbers(q.n, -q.l, s)


def cyclotron_number(n: int, l: int) -> int:
    """Electron-convention level index doubled: 2n + |l| - l (even)."""
    return 2 * n + abs(l) - l


@dataclass(frozen=True)
class MaterialParams:
    """GaAs quantum-well parameters; all values overridable."""

    E_g: float = 1500.0          # band gap, meV
    L: float = 10.0              # well width, nm
    m_e: float = 0.0665          # electron mass, units of m0
    m_h: float = 0.235           # hole mass, units of m0
    beta_coeff: float = 2.89     # Coulomb strength beta(B) = beta_coeff*sqrt(B), meV
    g_e_intercept: float = -0.01667
    g_e_slope: float = 0.0052    # 1/T
    g_h_slope: float = -0.05     # 1/T
    g_X: float = 3.0             # exciton-photon coupling, meV
    g_T: float = 0.5             # trion-photon coupling, meV
    mu_B: float = MU_B_MEV_PER_T
    hbar: float = HBAR_MEV_PS

    def __post_init__(self):
        for name in ("E_g", "L", "m_e", "m_h"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")

    def g_e(self, B: float) -> float:
        return self.g_e_intercept + self.g_e_slope * B

    def g_h(self, B: float) -> float:
        return self.g_h_slope * B

    def beta(self, B: float) -> float:
        """Magnetic-field-dependent Coulomb amplitude, meV."""
        return self.beta_coeff * math.sqrt(B)

    def cyclotron_quantum(self, kind: ParticleKind, B: float) -> float:
        """hbar*omega_c = hbar*e*B/m, expressed through mu_B, in meV."""
        m_rel = self.m_e if kind == "electron" else self.m_h
        return 2.0 * self.mu_B * B / m_rel

    def subband_energy(self, kind: ParticleKind) -> float:
        """Ground sub-band kinetic energy hbar^2 pi^2 / (2 m L^2), meV."""
        m_rel = self.m_e if kind == "electron" else self.m_h
        m = m_rel * ELECTRON_MASS_MEV_PS2_PER_NM2
        return self.hbar**2 * math.pi**2 / (2.0 * m * self.L**2)


@dataclass(frozen=True)
class LandauBasis:
    """Ordered spatial single-particle basis, `per_level` orbitals per level."""

    states: tuple[QuantumNumbers, ...]
    levels: int
    per_level: int

    @property
    def size(self) -> int:
        return len(self.states)

    def index_of(self, q: QuantumNumbers) -> int:
        """1-based ordering index of the orbital (n, l); spin is ignored."""
        return self._index[(q.n, q.l)]

    @property
    def _index(self) -> dict[tuple[int, int], int]:
        # built lazily; object.__setattr__ because the dataclass is frozen
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {(q.n, q.l): i + 1 for i, q in enumerate(self.states)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def level_states(self, k: int) -> tuple[QuantumNumbers, ...]:
        """Orbitals of 0-based level k."""
        return self.states[k * self.per_level : (k + 1) * self.per_level]

    def fingerprint(self) -> str:
        return f"landau-l{self.levels}-n{self.per_level}"


def _level_orbitals(k: int, count: int) -> list[QuantumNumbers]:
    # solutions of 2n + |l| - l = 2k, ordered by n ascending then l ascending:
    # (0, -k), (1, 1-k), ..., (k-1, -1), then (k, 0), (k, 1), ...
    out = [QuantumNumbers(n, n - k) for n in range(k)]
    l = 0
    while len(out) < count:
        out.append(QuantumNumbers(k, l))
        l += 1
    return out[:count]


def build_landau_basis(levels: int, per_level: int) -> LandauBasis:
    """Enumerate `levels` Landau levels with `per_level` orbitals each.

    Within a degenerate level the ordering is deterministic: n ascending,
    then l ascending.
    """
    if levels < 1 or per_level < 1:
        raise ValueError("levels and per_level must both be >= 1")
    states: list[QuantumNumbers] = []
    for k in range(levels):
        states.extend(_level_orbitals(k, per_level))
    return LandauBasis(states=tuple(states), levels=levels, per_level=per_level)


def single_particle_energy(
    q: QuantumNumbers, kind: ParticleKind, B: float, p: MaterialParams
) -> float:
    """Cyclotron + Zeeman + sub-band + gap energy of one particle, meV.

    `q` is expressed in the particle's own quantum numbers, i.e. hole
    labels must already be conjugated.  Electrons take the cyclotron
    combination 2n + |l| - l + 1 and Zeeman sign +g_e(B); holes take
    2n + |l| + l + 1 and -g_h(B).
    """
    if B <= 0.0:
        raise ValueError(f"magnetic field must be positive, got {B}")
    if q.s is None:
        raise ValueError("single_particle_energy requires a spin-resolved state")
    hwc = p.cyclotron_quantum(kind, B)
    if kind == "electron":
        orbital = 2 * q.n + abs(q.l) - q.l + 1
        zeeman = p.g_e(B) * p.mu_B * B * q.s
    elif kind == "hole":
        orbital = 2 * q.n + abs(q.l) + q.l + 1
        zeeman = -p.g_h(B) * p.mu_B * B * q.s
    else:
        raise ValueError(f"unknown particle kind {kind!r}")
    return 0.5 * hwc * orbital + zeeman + p.subband_energy(kind) + p.E_g


def alpha_ratio(L: float, B: float) -> float:
    """Dimensionless well-width to magnetic-length ratio alpha = L / l_b."""
    if L <= 0.0:
        raise ValueError(f"well width must be positive, got {L}")
    return L / magnetic_length_nm(B)
