"""Driven trion-exciton-polariton effective model and its propagation.

Product basis |alpha, beta, n> with alpha in {G, X} (exciton sector),
beta in {1down, T} (trion sector) and n photons up to a cutoff.  The
Hamiltonian couples both matter transitions to the same cavity mode,

    H = w a+a + w_X s+s + (w_T - w_e) t+t
        + g_X P_X (s+a + a+s) + g_T P_T (t+a + a+t)
        + Omega(t) (exp(-i w_L t / hbar) a+ + h.c.),

with all energies in meV and phases accumulating at E/hbar (hbar in
meV ps).  Absolute quantum-well energies are ~3e3 meV, so gate work is
done in a frame shifted by an energy reference (`EffectiveParams.shifted`),
which rescales the propagator by a diagonal phase per excitation number
and leaves populations untouched.

Time stepping is classical fixed-step RK4; the drive envelope and phase
are precomputed on the half-step grid and the inner loop runs under numba
when available (pure-numpy fallback otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import HBAR_MEV_PS
from .fewbody import SystemResponse

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

ALPHA_LABELS = ("G", "X")
BETA_LABELS = ("1down", "T")


class IntegrationAccuracyError(RuntimeError):
    """Norm drift exceeded the integrator bound; reduce dt."""


@dataclass(frozen=True)
class PulseTrain:
    """Train of Gaussian pulses (amplitude meV, center ps, width ps)."""

    pulses: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        for amp, center, width in self.pulses:
            if width <= 0.0:
                raise ValueError(f"pulse width must be positive, got {width}")

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for amp, center, width in self.pulses:
            out = out + amp * np.exp(-((t - center) ** 2) / (2.0 * width**2))
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def from_flat(values) -> "PulseTrain":
        values = list(values)
        if len(values) % 3:
            raise ValueError("flat pulse vector length must be a multiple of 3")
        return PulseTrain(tuple(
            (values[3 * i], values[3 * i + 1], values[3 * i + 2])
            for i in range(len(values) // 3)
        ))


def pulse_amplitude(train: PulseTrain, t) -> float:
    """Total drive envelope Omega(t) in meV."""
    return train.amplitude(t)


class ProductBasis:
    """|alpha, beta, n> labels, their ordering, and the qudit mapping."""

    def __init__(self, n_ph: int):
        if n_ph < 1:
            raise ValueError(f"photon cutoff must be >= 1, got {n_ph}")
        self.n_ph = n_ph
        self.labels = [
            (a, b, n)
            for a in ALPHA_LABELS
            for b in BETA_LABELS
            for n in range(n_ph + 1)
        ]
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    @property
    def dim(self) -> int:
        return 4 * (self.n_ph + 1)

    def index(self, label) -> int:
        try:
            return self._index[tuple(label)]
        except KeyError:
            raise KeyError(f"label {label} not in basis (n_ph={self.n_ph})") from None

    def indices(self, labels) -> np.ndarray:
        return np.array([self.index(lab) for lab in labels])

    @property
    def qudit_labels(self):
        """|0>..|3> of the four-level qudit encoding."""
        return [("G", "1down", 0), ("G", "T", 0), ("X", "1down", 0), ("X", "T", 0)]

    def leakage_indices(self, labels) -> np.ndarray:
        keep = set(self.indices(labels).tolist())
        return np.array([i for i in range(self.dim) if i not in keep])

    def excitation_number(self) -> np.ndarray:
        """Diagonal of a+a + s+s + t+t, conserved by the undriven model."""
        return np.array([
            n + (a == "X") + (b == "T") for (a, b, n) in self.labels
        ], dtype=float)


def format_label(label) -> str:
    a, b, n = label
    return f"{a},{b},{n}"


@dataclass(frozen=True)
class EffectiveParams:
    """Inputs of the effective model; energies meV, omega_L drives a+."""

    omega_cavity: float
    response: SystemResponse
    g_X: float
    g_T: float
    omega_L: float
    n_ph: int = 3
    hbar: float = HBAR_MEV_PS

    @property
    def delta_X(self) -> float:
        return self.response.omega_X - self.omega_cavity

    @property
    def delta_T(self) -> float:
        return (self.response.omega_T - self.response.omega_e) - self.omega_cavity

    @property
    def coupling_X(self) -> float:
        return self.g_X * self.response.P_X

    @property
    def coupling_T(self) -> float:
        return self.g_T * self.response.P_T

    def shifted(self, reference: float) -> "EffectiveParams":
        """Same model in the frame rotating at `reference`/hbar.

        Subtracts `reference` from the cavity, exciton, trion-transition
        and drive frequencies; detunings and couplings are untouched.  The
        propagator changes by exp(i reference N t / hbar) with N the
        excitation number.
        """
        response = replace(
            self.response,
            omega_X=self.response.omega_X - reference,
            omega_T=self.response.omega_T - reference,
        )
        return replace(
            self,
            omega_cavity=self.omega_cavity - reference,
            response=response,
            omega_L=self.omega_L - reference,
        )


class EffectiveModel:
    """Dense operator matrices of one EffectiveParams instance."""

    def __init__(self, p: EffectiveParams):
        self.params = p
        self.basis = ProductBasis(p.n_ph)
        dim = self.basis.dim
        labels = self.basis.labels
        idx = self.basis._index
        adag = np.zeros((dim, dim))
        for (a, b, n) in labels:
            if n + 1 <= p.n_ph:
                adag[idx[(a, b, n + 1)], idx[(a, b, n)]] = math.sqrt(n + 1)
        sdag = np.zeros((dim, dim))  # |X><G| on the exciton sector
        tdag = np.zeros((dim, dim))  # |T><1down| on the trion sector
        for (a, b, n) in labels:
            if a == "G":
                sdag[idx[("X", b, n)], idx[(a, b, n)]] = 1.0
            if b == "1down":
                tdag[idx[(a, "T", n)], idx[(a, b, n)]] = 1.0
        energies = np.array([
            p.omega_cavity * n
            + p.response.omega_X * (a == "X")
            + (p.response.omega_T - p.response.omega_e) * (b == "T")
            for (a, b, n) in labels
        ])
        self.h0 = np.diag(energies)
        self.h0 += p.coupling_X * (sdag @ adag.T + adag @ sdag.T)
        self.h0 += p.coupling_T * (tdag @ adag.T + adag @ tdag.T)
        self.adag = adag

    def drive_phase(self, t):
        """c(t) = Omega(t) exp(-i omega_L t / hbar); drive = c a+ + h.c."""
        p = self.params
        return np.exp(-1j * p.omega_L * np.asarray(t, dtype=float) / p.hbar)

    def hamiltonian(self, t: float, train: PulseTrain) -> np.ndarray:
        c = train.amplitude(t) * self.drive_phase(t)
        return self.h0 + c * self.adag + np.conj(c) * self.adag.T


def hamiltonian_at(t: float, p: EffectiveParams, train: PulseTrain) -> np.ndarray:
    """Hermitian model Hamiltonian at time t, in meV."""
    return EffectiveModel(p).hamiltonian(t, train)


@dataclass
class Trajectory:
    times: np.ndarray          # ps
    states: np.ndarray         # (n_samples, dim) or (n_samples, dim, n_cols)
    basis: ProductBasis

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _rk4_kernel(w0, wd, y, c_grid, dt, n_steps, out, stride):  # pragma: no cover
        dim, ncols = y.shape
        sample = 0
        if stride > 0:
            out[0] = y
            sample = 1
        half = 0.5 * dt
        sixth = dt / 6.0
        for step in range(n_steps):
            c0 = c_grid[2 * step]
            ch = c_grid[2 * step + 1]
            c1 = c_grid[2 * step + 2]
            k1 = -1j * (w0 @ y + c0 * (wd @ y) + np.conj(c0) * (wd.T @ y))
            y2 = y + half * k1
            k2 = -1j * (w0 @ y2 + ch * (wd @ y2) + np.conj(ch) * (wd.T @ y2))
            y3 = y + half * k2
            k3 = -1j * (w0 @ y3 + ch * (wd @ y3) + np.conj(ch) * (wd.T @ y3))
            y4 = y + dt * k3
            k4 = -1j * (w0 @ y4 + c1 * (wd @ y4) + np.conj(c1) * (wd.T @ y4))
            y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            if stride > 0 and (step + 1) % stride == 0:
                out[sample] = y
                sample += 1
        return y


def _rk4_numpy(w0, wd, y, c_grid, dt, n_steps, out, stride):
    wdt = wd.T
    sample = 0
    if stride > 0:
        out[0] = y
        sample = 1
    for step in range(n_steps):
        c0, ch, c1 = c_grid[2 * step : 2 * step + 3]
        k1 = -1j * (w0 @ y + c0 * (wd @ y) + np.conj(c0) * (wdt @ y))
        y2 = y + 0.5 * dt * k1
        k2 = -1j * (w0 @ y2 + ch * (wd @ y2) + np.conj(ch) * (wdt @ y2))
        y3 = y + 0.5 * dt * k2
        k3 = -1j * (w0 @ y3 + ch * (wd @ y3) + np.conj(ch) * (wdt @ y3))
        y4 = y + dt * k3
        k4 = -1j * (w0 @ y4 + c1 * (wd @ y4) + np.conj(c1) * (wdt @ y4))
        y = y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if stride > 0 and (step + 1) % stride == 0:
            out[sample] = y
            sample += 1
    return y


def _propagate(model: EffectiveModel, train: PulseTrain, y0: np.ndarray,
               t0: float, tf: float, dt: float, stride: int):
    """Shared RK4 driver; y0 has shape (dim, ncols)."""
    if tf <= t0:
        raise ValueError(f"need tf > t0, got [{t0}, {tf}]")
    if dt <= 0.0:
        raise ValueError(f"need dt > 0, got {dt}")
    p = model.params
    n_steps = max(1, int(round((tf - t0) / dt)))
    step = (tf - t0) / n_steps
    t_half = t0 + 0.5 * step * np.arange(2 * n_steps + 1)
    c_grid = (train.amplitude(t_half) / p.hbar) * model.drive_phase(t_half)
    c_grid = np.ascontiguousarray(c_grid, dtype=np.complex128)
    w0 = np.ascontiguousarray(model.h0 / p.hbar, dtype=np.complex128)
    wd = np.ascontiguousarray(model.adag / p.hbar, dtype=np.complex128)
    y = np.ascontiguousarray(y0, dtype=np.complex128)
    if stride > 0:
        n_samples = 1 + n_steps // stride
        out = np.empty((n_samples, *y.shape), dtype=np.complex128)
        times = t0 + step * stride * np.arange(n_samples)
        times[-1] = min(times[-1], tf)
    else:
        out = np.empty((0, *y.shape), dtype=np.complex128)
        times = np.array([tf])
    kernel = _rk4_kernel if _HAVE_NUMBA else _rk4_numpy
    y_final = kernel(w0, wd, y, c_grid, step, n_steps, out, stride)
    return times, out, y_final


def evolve(psi0, t0: float, tf: float, dt: float, p: EffectiveParams,
           train: PulseTrain = PulseTrain(), *, stride: int = 1,
           norm_tol: float = 1e-6) -> Trajectory:
    """Propagate one state under the time-dependent model; samples every
    `stride` steps (the initial state is always included)."""
    model = EffectiveModel(p)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (model.basis.dim,):
        raise ValueError(
            f"psi0 has shape {psi0.shape}, expected ({model.basis.dim},)")
    times, out, y_final = _propagate(
        model, train, psi0[:, None], t0, tf, dt, max(1, stride))
    states = out[:, :, 0]
    final_norm = float(np.linalg.norm(y_final[:, 0]))
    drift = abs(final_norm - float(np.linalg.norm(psi0)))
    if not math.isfinite(final_norm) or drift > norm_tol:
        raise IntegrationAccuracyError(
            f"norm drift {drift:.3e} exceeds {norm_tol:.1e}; reduce dt")
    if not math.isclose(times[-1], tf, rel_tol=0, abs_tol=1e-12):
        times = np.append(times, tf)
        states = np.vstack([states, y_final[:, 0][None, :]])
    return Trajectory(times=times, states=states, basis=model.basis)


def propagator(p: EffectiveParams, train: PulseTrain, tf: float, dt: float,
               subspace) -> tuple[np.ndarray, np.ndarray]:
    """Projected evolution operator U_IJ = <I(0)|J(tf)> over `subspace`.

    Returns (U, columns): U is the N x N projection onto the subspace
    labels (sub-unitary under leakage), columns the full-space evolved
    states for leakage diagnostics.
    """
    model = EffectiveModel(p)
    idx = model.basis.indices(subspace)
    y0 = np.zeros((model.basis.dim, len(idx)), dtype=np.complex128)
    for col, i in enumerate(idx):
        y0[i, col] = 1.0
    _, _, y_final = _propagate(model, train, y0, 0.0, tf, dt, 0)
    return y_final[idx, :], y_final


def propagator_profile(p: EffectiveParams, train: PulseTrain, tf: float,
                       dt: float, subspace, stride: int = 20):
    """Projected evolution operator sampled along the way.

    Returns (times, U_samples) with U_samples[k] the projected operator at
    times[k]; one integration covers every candidate gate time.
    """
    model = EffectiveModel(p)
    idx = model.basis.indices(subspace)
    y0 = np.zeros((model.basis.dim, len(idx)), dtype=np.complex128)
    for col, i in enumerate(idx):
        y0[i, col] = 1.0
    times, samples, y_final = _propagate(model, train, y0, 0.0, tf, dt,
                                         max(1, stride))
    if not math.isclose(times[-1], tf, rel_tol=0, abs_tol=1e-12):
        times = np.append(times, tf)
        samples = np.concatenate([samples, y_final[None]], axis=0)
    return times, samples[:, idx, :]


def populations(psi, labels, basis: ProductBasis) -> np.ndarray:
    """|amplitude|^2 of `psi` on each label."""
    psi = np.asarray(psi)
    return np.abs(psi[basis.indices(labels)]) ** 2
