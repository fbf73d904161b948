"""Dimensionless two-body Coulomb matrix elements in the Landau basis.

An element <ij|V|st> factorizes into a form factor F_alpha(q) carrying the
finite well width and two radial overlap functions theta_{i,s}(q),
theta_{j,t}(q); the element is the q-integral of their product, subject to
angular-momentum conservation l_i + l_j = l_s + l_t.  alpha = L/l_b is the
only physics parameter; the strictly-2D limit alpha -> 0 has the constant
form factor pi^2 and is exposed as a separate analytic path (alpha = 0).

theta depends only on the orbital pair and q, so tables tabulate theta once
on a fixed q grid and reduce every element to a weighted dot product.
Accuracy is estimated by recomputing on an independent coarser grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln, jv

from .basis import LandauBasis, QuantumNumbers
from .quadrature import oscillation_resolving_rule, panel_rule

FORM_FACTOR_2D = math.pi**2

DEFAULT_Q_MAX = 50.0
DEFAULT_TOLERANCE = 1e-9


class QuadratureAccuracyError(RuntimeError):
    """Raised when the two-grid error estimate misses the requested tolerance."""

    def __init__(self, message, achieved=None, requested=None, key=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested
        self.key = key


def form_factor(alpha, q):
    """Finite-width form factor F_alpha(q); vectorized in q.

    The q -> 0 point is a removable singularity with limit pi^2 (for any
    alpha); the small-x combination x + expm1(-x) is summed by series to
    avoid cancellation.
    """
    if alpha <= 0.0:
        raise ValueError(
            f"alpha must be > 0 (use the analytic 2D limit for alpha=0), got {alpha}"
        )
    q = np.asarray(q, dtype=float)
    if np.any(q < 0.0):
        raise ValueError("q must be >= 0")
    scalar = q.ndim == 0
    q = np.atleast_1d(q)
    x = alpha * q
    g = np.where(x < 1e-3, _expm1_plus_x_series(x), x + np.expm1(-x))
    pi2 = math.pi**2
    pi4 = pi2 * pi2
    num = pi2 * (20.0 * alpha**3 * pi2 * q**3 + 3.0 * alpha**5 * q**5 + 32.0 * pi4 * g)
    den = alpha**2 * (4.0 * pi2 * q + alpha**2 * q**3) ** 2
    out = np.full_like(q, FORM_FACTOR_2D)
    nz = q > 0.0
    out[nz] = num[nz] / den[nz]
    return float(out[0]) if scalar else out


def _expm1_plus_x_series(x):
    # x + expm1(-x) = x^2/2 - x^3/6 + x^4/24 - ..., kept to x^7
    acc = np.zeros_like(x)
    term = x * x / 2.0
    for k in range(3, 8):
        acc += term
        term = term * (-x) / k
    return acc + term


def normalization_constant(n: int, l: int) -> float:
    """sqrt(2 n! / (pi (n+|l|)!)), via log-gamma to avoid overflow."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    log_ratio = gammaln(n + 1) - gammaln(n + abs(l) + 1)
    return math.sqrt(2.0 / math.pi) * math.exp(0.5 * log_ratio)


def _orbital_radial(q: QuantumNumbers, r: np.ndarray) -> np.ndarray:
    """c_{n,l} r^|l| L_n^|l|(r^2) evaluated on the radial grid."""
    al = abs(q.l)
    c = normalization_constant(q.n, q.l)
    return c * r**al * eval_genlaguerre(q.n, al, r * r)


def _radial_extent(a: QuantumNumbers, b: QuantumNumbers) -> float:
    # integrand ~ r^p e^{-r^2}; push the cut a few widths past the peak
    p = abs(a.l) + abs(b.l) + 1 + 2 * (a.n + b.n)
    return max(8.0, math.sqrt(0.5 * p) + 4.5)


def radial_overlap(a: QuantumNumbers, b: QuantumNumbers, q, *, order: int = 16):
    """theta_{a,b}(q): Hankel-type overlap of two Landau orbitals.

    theta_{a,b}(q) = c_a c_b Int_0^inf r^(|l_a|+|l_b|+1) e^{-r^2}
    L_{n_a}^{|l_a|}(r^2) L_{n_b}^{|l_b|}(r^2) J_{|l_a-l_b|}(q r) dr,
    evaluated with a Gauss-Legendre grid fine enough to resolve the Bessel
    oscillation at the largest requested q.  Vectorized in q.
    """
    q = np.asarray(q, dtype=float)
    scalar = q.ndim == 0
    qv = np.atleast_1d(q)
    if np.any(qv < 0.0):
        raise ValueError("q must be >= 0")
    r_max = _radial_extent(a, b)
    r, w = oscillation_resolving_rule(0.0, r_max, float(qv.max()), order, 0.5)
    g = _orbital_radial(a, r) * _orbital_radial(b, r) * r * np.exp(-r * r)
    m = abs(a.l - b.l)
    kernel = jv(m, qv[:, None] * r[None, :])
    out = kernel @ (w * g)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class CoulombKey:
    """Label set of <ij|V|st>; indices are 1-based basis ordering indices."""

    i: int
    j: int
    s: int
    t: int
    alpha: float

    def canonical(self) -> "CoulombKey":
        # relabeling symmetry <ij|V|st> = <ji|V|ts>
        if (self.j, self.t) < (self.i, self.s):
            return CoulombKey(self.j, self.i, self.t, self.s, self.alpha)
        return self


@dataclass(frozen=True)
class _GridSpec:
    q_max: float
    q_panel: float
    q_order: int
    r_order: int

    def q_rule(self):
        n = max(1, math.ceil(self.q_max / self.q_panel))
        return panel_rule(0.0, self.q_max, n, self.q_order)


MAIN_GRID = _GridSpec(q_max=DEFAULT_Q_MAX, q_panel=0.25, q_order=12, r_order=16)
CHECK_GRID = _GridSpec(q_max=DEFAULT_Q_MAX, q_panel=0.4, q_order=10, r_order=12)


class ThetaTable:
    """theta_{a,b} for every orbital pair of a basis, tabulated on a q grid.

    Pairs are grouped by Bessel order so each J_m(q x r) kernel matrix is
    built once and applied to all pairs sharing it.
    """

    def __init__(self, basis: LandauBasis, grid: _GridSpec = MAIN_GRID):
        self.basis = basis
        self.grid = grid
        self.q_nodes, self.q_weights = grid.q_rule()
        orbitals = basis.states
        size = len(orbitals)
        self.pair_column = {}
        pairs = []
        for i in range(size):
            for k in range(i, size):
                self.pair_column[(i, k)] = len(pairs)
                self.pair_column[(k, i)] = len(pairs)
                pairs.append((i, k))
        r_max = max(_radial_extent(a, b) for a in orbitals for b in orbitals)
        r, w_r = oscillation_resolving_rule(
            0.0, r_max, float(self.q_nodes.max()), grid.r_order, 0.5
        )
        phi = np.stack([_orbital_radial(q, r) for q in orbitals])
        envelope = r * np.exp(-r * r)
        by_order: dict[int, list[int]] = {}
        for col, (i, k) in enumerate(pairs):
            m = abs(orbitals[i].l - orbitals[k].l)
            by_order.setdefault(m, []).append(col)
        self.values = np.empty((len(self.q_nodes), len(pairs)))
        for m, cols in sorted(by_order.items()):
            kernel = jv(m, self.q_nodes[:, None] * r[None, :])
            g = np.stack(
                [w_r * envelope * phi[pairs[c][0]] * phi[pairs[c][1]] for c in cols],
                axis=1,
            )
            self.values[:, cols] = kernel @ g

    def column(self, i: int, k: int) -> np.ndarray:
        """theta for 0-based orbital positions (i, k) on the q grid."""
        return self.values[:, self.pair_column[(i, k)]]

    def integrate(self, alpha: float) -> np.ndarray:
        """All pair-pair integrals Int F_alpha theta theta dq as a dense matrix."""
        f = (
            np.full_like(self.q_nodes, FORM_FACTOR_2D)
            if alpha == 0.0
            else form_factor(alpha, self.q_nodes)
        )
        weighted = self.values * (self.q_weights * f)[:, None]
        return weighted.T @ self.values


class CoulombTable:
    """Dense table of pair-pair integrals for one basis at one alpha.

    `element` applies the electron-electron angular-momentum delta
    (l_i + l_j = l_s + l_t); `element_eh` the electron-hole one
    (l_i - l_j = l_s - l_t), matching hole labels conjugated from the
    shared basis.  Zero-by-symmetry entries are never stored.
    """

    def __init__(self, basis: LandauBasis, alpha: float, tolerance: float,
                 integrals: np.ndarray, max_error: float,
                 pair_column: dict[tuple[int, int], int]):
        self.basis = basis
        self.alpha = alpha
        self.tolerance = tolerance
        self.integrals = integrals
        self.max_error = max_error
        self._pair_column = pair_column
        self._l = np.array([q.l for q in basis.states])

    def pair_index(self, i: int, k: int) -> int:
        """Column of the (0-based) orbital pair (i, k) in `integrals`."""
        return self._pair_column[(i, k)]

    def element(self, i: int, j: int, s: int, t: int) -> float:
        """<ij|V|st> with 1-based ordering indices (all-electron labels)."""
        li, lj, ls, lt = (self._l[x - 1] for x in (i, j, s, t))
        if li + lj != ls + lt:
            return 0.0
        return float(
            self.integrals[self._pair_column[(i - 1, s - 1)],
                           self._pair_column[(j - 1, t - 1)]]
        )

    def element_eh(self, i: int, j: int, s: int, t: int) -> float:
        """<i jbar|V|s tbar>: j, t are basis labels whose conjugates are holes."""
        li, lj, ls, lt = (self._l[x - 1] for x in (i, j, s, t))
        if li - lj != ls - lt:
            return 0.0
        return float(
            self.integrals[self._pair_column[(i - 1, s - 1)],
                           self._pair_column[(j - 1, t - 1)]]
        )

    def lookup(self, key: CoulombKey) -> float:
        if key.alpha != self.alpha:
            raise KeyError(f"table built at alpha={self.alpha}, key has {key.alpha}")
        return self.element(key.i, key.j, key.s, key.t)

    def diagonal(self, i: int) -> float:
        """Direct element <ii|V|ii> for 1-based index i."""
        return self.element(i, i, i, i)

    def save(self, path) -> None:
        pairs = sorted({(min(i, k), max(i, k)) for (i, k) in self._pair_column})
        np.savez_compressed(
            path,
            integrals=self.integrals,
            alpha=self.alpha,
            tolerance=self.tolerance,
            max_error=self.max_error,
            levels=self.basis.levels,
            per_level=self.basis.per_level,
            pairs=np.array(pairs),
        )

    @staticmethod
    def load(path) -> "CoulombTable":
        from .basis import build_landau_basis

        data = np.load(path)
        basis = build_landau_basis(int(data["levels"]), int(data["per_level"]))
        pair_column = {}
        for col, (i, k) in enumerate(data["pairs"]):
            pair_column[(int(i), int(k))] = col
            pair_column[(int(k), int(i))] = col
        return CoulombTable(
            basis,
            float(data["alpha"]),
            float(data["tolerance"]),
            data["integrals"],
            float(data["max_error"]),
            pair_column,
        )


def build_coulomb_table(
    basis: LandauBasis,
    alpha: float,
    tolerance: float = DEFAULT_TOLERANCE,
    *,
    theta_main: ThetaTable | None = None,
    theta_check: ThetaTable | None = None,
    strict: bool = True,
) -> CoulombTable:
    """Tabulate every pair-pair integral of the basis at one alpha.

    Passing prebuilt ThetaTable instances lets field scans amortize the
    (alpha-independent) radial work across many alpha values.
    """
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if theta_main is None:
        theta_main = ThetaTable(basis, MAIN_GRID)
    if theta_check is None:
        theta_check = ThetaTable(basis, CHECK_GRID)
    main = theta_main.integrate(alpha)
    check = theta_check.integrate(alpha)
    err = np.abs(main - check)
    max_error = float(err.max())
    if strict and max_error > tolerance:
        flat = int(np.argmax(err))
        p1, p2 = np.unravel_index(flat, err.shape)
        raise QuadratureAccuracyError(
            f"coulomb table error estimate {max_error:.3e} exceeds tolerance "
            f"{tolerance:.3e} at pair columns ({p1}, {p2})",
            achieved=max_error,
            requested=tolerance,
            key=(int(p1), int(p2)),
        )
    return CoulombTable(basis, alpha, tolerance, main,
                        max_error, dict(theta_main.pair_column))


def coulomb_element(
    key: CoulombKey,
    basis: LandauBasis,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    q_max: float = DEFAULT_Q_MAX,
) -> float:
    """Single element <ij|V|st>, with a two-grid accuracy check.

    Returns 0 immediately when angular momentum conservation fails.
    alpha = 0 selects the analytic 2D-limit form factor pi^2.
    """
    orb = basis.states
    qi, qj, qs, qt = (orb[x - 1] for x in (key.i, key.j, key.s, key.t))
    if qi.l + qj.l != qs.l + qt.l:
        return 0.0

    def integrate(spec: _GridSpec) -> float:
        q, w = spec.q_rule()
        f = (
            np.full_like(q, FORM_FACTOR_2D)
            if key.alpha == 0.0
            else form_factor(key.alpha, q)
        )
        th1 = radial_overlap(qi, qs, q, order=spec.r_order)
        th2 = radial_overlap(qj, qt, q, order=spec.r_order)
        return float(np.sum(w * f * th1 * th2))

    main_spec = _GridSpec(q_max, MAIN_GRID.q_panel, MAIN_GRID.q_order, MAIN_GRID.r_order)
    check_spec = _GridSpec(q_max, CHECK_GRID.q_panel, CHECK_GRID.q_order, CHECK_GRID.r_order)
    value = integrate(main_spec)
    estimate = abs(value - integrate(check_spec))
    if estimate > tolerance:
        raise QuadratureAccuracyError(
            f"element {key} error estimate {estimate:.3e} exceeds {tolerance:.3e}",
            achieved=estimate,
            requested=tolerance,
            key=key,
        )
    return value
