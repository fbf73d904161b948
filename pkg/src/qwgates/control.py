"""Gate targets, infidelity functionals and derivative-free synthesis.

The search point is a flattened pulse train plus the magnetic field,
[(A_i, t_i, xi_i) x M, B].  Each objective evaluation interpolates the
system response at B, builds the effective model, propagates the encoded
basis states to t_f and scores the projected gate with the trace
infidelity J = 1 - |Tr(U+ V)|^2 / N^2 plus a leakage penalty.  A seeded
Nelder-Mead simplex with bound clamping and random restarts drives the
search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .coulomb import QuadratureAccuracyError
from .effective import (
    EffectiveParams,
    IntegrationAccuracyError,
    ProductBasis,
    PulseTrain,
    propagator,
)
from .fewbody import SystemResponse

QUBIT_ENCODINGS = {
    "exciton": [("G", "1down", 1), ("X", "1down", 0)],
    "trion": [("G", "1down", 1), ("G", "T", 0)],
}

_S2 = 1.0 / math.sqrt(2.0)
GATE_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "ISWAP": np.array(
        [
            [1, 0, 0, 0],
            [0, 0, 1j, 0],
            [0, 1j, 0, 0],
            [0, 0, 0, 1],
        ],
        dtype=complex,
    ),
}


@dataclass(frozen=True)
class GateTarget:
    name: str
    matrix: np.ndarray
    encoding: str  # "exciton" | "trion" | "qudit"

    def labels(self, basis: ProductBasis):
        if self.encoding == "qudit":
            return basis.qudit_labels
        return QUBIT_ENCODINGS[self.encoding]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def gate_matrix(name: str, encoding: str = "exciton") -> GateTarget:
    """Standard gate target; 2-level names on a qubit encoding, ISWAP on
    the 4-level qudit."""
    key = name.upper().replace("ISWAP", "ISWAP")
    if key not in GATE_MATRICES:
        raise ValueError(f"unknown gate {name!r}; choose from {sorted(GATE_MATRICES)}")
    matrix = GATE_MATRICES[key]
    if key == "ISWAP":
        encoding = "qudit"
    elif encoding not in QUBIT_ENCODINGS:
        raise ValueError(f"unknown qubit encoding {encoding!r}")
    if encoding == "qudit" and matrix.shape[0] != 4:
        raise ValueError(f"gate {name} is 2x2 but encoding is the 4-level qudit")
    return GateTarget(name=key, matrix=matrix, encoding=encoding)


def process_infidelity(U: np.ndarray, V: np.ndarray, N: int | None = None) -> float:
    """J = 1 - |Tr(U+ V)|^2 / N^2; zero iff U = exp(i phi) V for unitary U."""
    U = np.asarray(U)
    V = np.asarray(V)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"dimension mismatch: {U.shape} vs {V.shape}")
    n = N if N is not None else U.shape[0]
    return 1.0 - abs(np.trace(U.conj().T @ V)) ** 2 / n**2


def process_fidelity(U: np.ndarray, V: np.ndarray) -> float:
    return 1.0 - process_infidelity(U, V)


def average_infidelity(U: np.ndarray, V: np.ndarray, n_samples: int = 1000,
                       seed: int = 0) -> float:
    """Monte-Carlo average of 1 - |<psi| U+ V |psi>|^2 over random qubit states.

    States are cos(theta/2)|0> + exp(i phi) sin(theta/2)|1> with theta
    uniform on [0, pi] and phi uniform on [0, 2 pi], seeded.
    """
    U = np.asarray(U)
    V = np.asarray(V)
    if U.shape != (2, 2) or V.shape != (2, 2):
        raise ValueError("average_infidelity is defined for 2-level encodings")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, math.pi, n_samples)
    phi = rng.uniform(0.0, 2.0 * math.pi, n_samples)
    psi = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    amp = np.einsum("in,ij,jn->n", psi.conj(), U.conj().T @ V, psi)
    return float(np.mean(1.0 - np.abs(amp) ** 2))


def rotation_axis(G: float, delta: float) -> np.ndarray:
    """Undriven qubit rotation axis (G, 0, delta/2), normalized."""
    norm = math.sqrt(G * G + 0.25 * delta * delta)
    if norm == 0.0:
        raise ValueError("rotation axis undefined for G = delta = 0")
    return np.array([G, 0.0, 0.5 * delta]) / norm


def bloch_trajectory(traj, labels) -> np.ndarray:
    """Unnormalized Bloch vectors of the encoded pair along a trajectory.

    Components are the usual sigma expectations of the projected (not
    renormalized) amplitudes, so |r| < 1 flags leakage out of the
    encoding.
    """
    i0, i1 = traj.basis.indices(labels)
    a = traj.states[:, i0]
    b = traj.states[:, i1]
    cross = np.conj(a) * b
    return np.stack(
        [2 * cross.real, 2 * cross.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=1
    )


def state_tomography(psi, labels, basis: ProductBasis):
    """Projected density matrix on the qudit labels; trace deficit = leakage."""
    sub = np.asarray(psi)[basis.indices(labels)]
    return np.outer(sub, sub.conj())


def repeated_application(U: np.ndarray, psi0, k: int) -> np.ndarray:
    """Populations over the subspace after 0..k applications of U."""
    if k < 1:
        raise ValueError("k must be >= 1")
    psi = np.asarray(psi0, dtype=complex)
    out = [np.abs(psi) ** 2]
    for _ in range(k):
        psi = U @ psi
        out.append(np.abs(psi) ** 2)
    return np.array(out)


# ---------------------------------------------------------------------------
# search space


@dataclass(frozen=True)
class OptimizerConfig:
    """Nelder-Mead and synthesis settings."""

    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iter: int = 500
    tolerance: float = 1e-10
    restarts: int = 2
    penalty_weight: float = 1.0
    seed: int = 2024
    t_f: float = 10.0          # gate time, ps
    dt: float = 1e-3           # integrator step, ps
    max_pulses: int = 5
    amp_bounds: tuple[float, float] = (-5.0, 5.0)
    width_bounds: tuple[float, float] | None = None   # None -> (0.05, t_f/2)
    b_bounds: tuple[float, float] = (0.5, 10.0)
    optimize_t_f: bool = False  # append t_f as a search coordinate
    t_f_bounds: tuple[float, float] | None = None     # None -> (0.2 t_f, t_f)

    def __post_init__(self):
        for name in ("reflection", "expansion", "contraction", "shrink"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


def control_bounds(cfg: OptimizerConfig):
    """(lower, upper) arrays for [(A_i, t_i, xi_i) x M, B] (+ t_f if enabled)."""
    wlo, whi = cfg.width_bounds or (0.05, cfg.t_f / 2.0)
    lower, upper = [], []
    for _ in range(cfg.max_pulses):
        lower += [cfg.amp_bounds[0], 0.0, wlo]
        upper += [cfg.amp_bounds[1], cfg.t_f, whi]
    lower.append(cfg.b_bounds[0])
    upper.append(cfg.b_bounds[1])
    if cfg.optimize_t_f:
        tlo, thi = cfg.t_f_bounds or (0.2 * cfg.t_f, cfg.t_f)
        lower.append(tlo)
        upper.append(thi)
    return np.array(lower), np.array(upper)


@dataclass
class ControlVector:
    """Flattened search point [(A_i, t_i, xi_i) x M, B] with its bounds.

    When gate time is optimized it is appended as a final coordinate.
    """

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    has_t_f: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        extra = 2 if self.has_t_f else 1
        if self.values.shape != self.lower.shape or (len(self.values) - extra) % 3:
            raise ValueError("control vector must hold M pulse triples plus B")

    @classmethod
    def centered(cls, cfg: OptimizerConfig) -> "ControlVector":
        lower, upper = control_bounds(cfg)
        return cls(0.5 * (lower + upper), lower, upper, cfg.optimize_t_f)

    def clipped(self) -> np.ndarray:
        return np.clip(self.values, self.lower, self.upper)

    def pulse_train(self) -> PulseTrain:
        end = -2 if self.has_t_f else -1
        return PulseTrain.from_flat(self.clipped()[:end])

    def field(self) -> float:
        clipped = self.clipped()
        return float(clipped[-2] if self.has_t_f else clipped[-1])

    def gate_time(self, cfg: OptimizerConfig) -> float:
        return float(self.clipped()[-1]) if self.has_t_f else cfg.t_f


# ---------------------------------------------------------------------------
# objective


@dataclass
class SynthesisSetup:
    """Everything the objective needs besides the search point.

    `response` maps B (tesla) to a SystemResponse; energies are shifted by
    `frame_reference` (default: the cavity energy) before integration so
    the working Hamiltonian stays at meV scale.
    """

    response: Callable[[float], SystemResponse]
    g_X: float
    g_T: float
    omega_cavity: float
    omega_L: float | None = None
    n_ph: int = 3
    frame_reference: float | None = None

    def effective_params(self, B: float, n_ph: int | None = None) -> EffectiveParams:
        ref = self.omega_cavity if self.frame_reference is None else self.frame_reference
        omega_l = self.omega_cavity if self.omega_L is None else self.omega_L
        p = EffectiveParams(
            omega_cavity=self.omega_cavity,
            response=self.response(B),
            g_X=self.g_X,
            g_T=self.g_T,
            omega_L=omega_l,
            n_ph=self.n_ph if n_ph is None else n_ph,
        )
        return p.shifted(ref)


def _evaluate_gate(x: ControlVector, target: GateTarget, setup: SynthesisSetup,
                   cfg: OptimizerConfig, n_ph: int | None = None):
    """Propagate the encoded basis at the search point; returns (U, J, leak)."""
    params = setup.effective_params(x.field(), n_ph)
    labels = target.labels(ProductBasis(params.n_ph))
    U, columns = propagator(params, x.pulse_train(), x.gate_time(cfg), cfg.dt,
                            labels)
    J = process_infidelity(U, target.matrix)
    leak = float(np.mean(1.0 - np.sum(np.abs(U) ** 2, axis=0)))
    return U, J, leak, columns


def objective(x, target: GateTarget, setup: SynthesisSetup,
              cfg: OptimizerConfig) -> float:
    """J + penalty_weight * mean final leakage; +inf on numerical failure."""
    if not isinstance(x, ControlVector):
        lower, upper = control_bounds(cfg)
        x = ControlVector(np.asarray(x, dtype=float), lower, upper,
                          cfg.optimize_t_f)
    try:
        _, J, leak, _ = _evaluate_gate(x, target, setup, cfg)
    except (IntegrationAccuracyError, QuadratureAccuracyError, ValueError):
        return math.inf
    return J + cfg.penalty_weight * leak


# ---------------------------------------------------------------------------
# Nelder-Mead


@dataclass
class OptimizerResult:
    x: np.ndarray
    fun: float
    trace: list[float]          # best value per iteration, non-increasing
    iterations: int
    converged: bool


def _clamped(f, lower, upper):
    span = np.where(upper > lower, upper - lower, 1.0)

    def wrapped(x):
        inside = np.clip(x, lower, upper)
        excess = (x - inside) / span
        return f(inside) + 10.0 * float(np.dot(excess, excess))

    return wrapped


def nelder_mead(f, x0, cfg: OptimizerConfig, lower=None, upper=None,
                rng: np.random.Generator | None = None) -> OptimizerResult:
    """Seeded Nelder-Mead with bound clamping and random restarts.

    Iterates reflect/expand/contract/shrink until the simplex value spread
    and diameter fall below `cfg.tolerance` or `cfg.max_iter` is reached;
    `cfg.restarts` additional runs start from seeded uniform draws inside
    the bounds and the best vertex overall is returned.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if lower is None:
        lower = np.full(n, -np.inf)
    if upper is None:
        upper = np.full(n, np.inf)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = rng or np.random.default_rng(cfg.seed)
    fun = _clamped(f, lower, upper)

    finite = np.isfinite(lower) & np.isfinite(upper)
    edge = np.where(finite, 0.1 * (upper - lower), np.maximum(0.1 * np.abs(x0), 0.1))

    starts = [x0]
    for _ in range(max(0, cfg.restarts)):
        draw = np.where(finite, rng.uniform(lower, upper), x0 + rng.normal(size=n))
        starts.append(draw)

    best: OptimizerResult | None = None
    for start in starts:
        result = _nelder_mead_single(fun, start, edge, cfg)
        if best is None or result.fun < best.fun:
            best = result
    if not math.isfinite(best.fun):
        raise ValueError("all simplex vertices evaluated to non-finite values")
    best.x = np.clip(best.x, lower, upper)
    return best


def _nelder_mead_single(fun, x0, edge, cfg: OptimizerConfig) -> OptimizerResult:
    n = len(x0)
    simplex = [np.array(x0, dtype=float)]
    for i in range(n):
        step = np.zeros(n)
        step[i] = edge[i]
        simplex.append(x0 + step)
    values = np.array([fun(v) for v in simplex])
    if not np.isfinite(values).any():
        raise ValueError("all simplex vertices evaluated to non-finite values")
    trace = []
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iter + 1):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = values[order]
        trace.append(float(values[0]))
        spread = values[-1] - values[0]
        diameter = max(np.max(np.abs(v - simplex[0])) for v in simplex[1:])
        if spread < cfg.tolerance or diameter < cfg.tolerance:
            converged = True
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + cfg.reflection * (centroid - worst)
        fr = fun(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + cfg.expansion * (xr - centroid)
            fe = fun(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:  # outside contraction
            xc = centroid + cfg.contraction * (xr - centroid)
            fc = fun(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:  # inside contraction
            xc = centroid - cfg.contraction * (centroid - worst)
            fc = fun(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        for i in range(1, n + 1):  # shrink toward the best vertex
            simplex[i] = simplex[0] + cfg.shrink * (simplex[i] - simplex[0])
            values[i] = fun(simplex[i])
    order = np.argsort(values, kind="stable")
    return OptimizerResult(
        x=np.array(simplex[order[0]]),
        fun=float(values[order[0]]),
        trace=trace,
        iterations=iterations,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# synthesis


@dataclass
class SynthesisResult:
    gate: str
    encoding: str
    control: list[float]            # [(A_i, t_i, xi_i) x M, B]
    B: float
    objective_value: float          # J + penalty
    infidelity: float               # trace J at the optimum
    average_infidelity: float | None
    process_fidelity: float
    leakage: float
    gate_matrix: np.ndarray
    trace: list[float]
    iterations: int
    converged: bool
    seed: int
    t_f: float
    dt: float
    n_ph: int
    bounds_lower: list[float]
    bounds_upper: list[float]

    def pulse_train(self) -> PulseTrain:
        return PulseTrain.from_flat(self.control[:-1])

    def to_json(self) -> str:
        payload = asdict(self)
        payload["gate_matrix"] = {
            "real": self.gate_matrix.real.tolist(),
            "imag": self.gate_matrix.imag.tolist(),
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "SynthesisResult":
        payload = json.loads(text)
        gm = payload.pop("gate_matrix")
        matrix = np.array(gm["real"]) + 1j * np.array(gm["imag"])
        return SynthesisResult(gate_matrix=matrix, **payload)


def fidelity_vs_time(target: GateTarget, train: PulseTrain, B: float,
                     setup: SynthesisSetup, cfg: OptimizerConfig,
                     t_max: float | None = None, stride: int = 20):
    """Process fidelity and mean leakage of U(t) along one evolution.

    Returns rows (t, fidelity, leakage); a single integration scores every
    candidate gate time.
    """
    from .effective import propagator_profile

    params = setup.effective_params(B)
    labels = target.labels(ProductBasis(params.n_ph))
    times, samples = propagator_profile(
        params, train, t_max if t_max is not None else cfg.t_f, cfg.dt,
        labels, stride)
    n = target.dim
    traces = np.einsum("sij,ij->s", samples.conj(), target.matrix)
    fidelity = np.abs(traces) ** 2 / n**2
    leak = 1.0 - np.mean(np.sum(np.abs(samples) ** 2, axis=1), axis=1)
    return np.column_stack([times, fidelity, leak])


def _field_stage(target: GateTarget, setup: SynthesisSetup,
                 cfg: OptimizerConfig, n_anchors: int = 3,
                 n_grid: int = 48):
    """Scan the undriven model over B (and gate time) for simplex anchors.

    One sampled integration per grid field gives the full objective-vs-time
    profile, so candidate (B, t_f) pairs come out of a coarse global sweep
    rather than a cold simplex start.
    """
    b_lo, b_hi = cfg.b_bounds
    t_lo, t_hi = (cfg.t_f_bounds or (0.2 * cfg.t_f, cfg.t_f)) \
        if cfg.optimize_t_f else (cfg.t_f, cfg.t_f)
    candidates = []
    for B in np.linspace(b_lo, b_hi, n_grid):
        try:
            rows = fidelity_vs_time(target, PulseTrain(), float(B), setup,
                                    cfg, t_max=t_hi, stride=10)
        except (IntegrationAccuracyError, QuadratureAccuracyError, ValueError):
            continue
        sel = rows[:, 0] >= t_lo - 1e-12
        if not sel.any():
            continue
        score = (1.0 - rows[sel, 1]) + cfg.penalty_weight * rows[sel, 2]
        k = int(np.argmin(score))
        candidates.append((float(score[k]), float(B), float(rows[sel, 0][k])))
    candidates.sort()
    anchors = []
    for score, B, t in candidates:
        if all(abs(B - a[0]) > 0.12 * (b_hi - b_lo) for a in anchors):
            anchors.append((B, t))
        if len(anchors) >= n_anchors:
            break
    return anchors or [(0.5 * (b_lo + b_hi), t_hi)]


def synthesize(target: GateTarget, setup: SynthesisSetup,
               cfg: OptimizerConfig) -> SynthesisResult:
    """Full synthesis loop: optimize pulses and field, return provenance.

    Simplex starts are seeded from an undriven field-stage sweep (pulses
    off) plus `cfg.restarts` seeded uniform draws; the best vertex overall
    wins.  The stored objective value is reproducible by re-evaluating
    `objective` at the stored control vector.
    """
    lower, upper = control_bounds(cfg)
    span = upper - lower
    has_tf = cfg.optimize_t_f

    def f(values):
        return objective(ControlVector(values, lower, upper, has_tf),
                         target, setup, cfg)

    rng = np.random.default_rng(cfg.seed)
    fun = _clamped(f, lower, upper)

    b_slot = 3 * cfg.max_pulses
    starts = []
    anchor_edge = 0.1 * span
    anchor_edge[:b_slot:3] = 0.08 * span[:b_slot:3]      # pulse amplitudes
    anchor_edge[b_slot] = 0.01 * span[b_slot]            # magnetic field
    if has_tf:
        anchor_edge[b_slot + 1] = 0.02 * span[b_slot + 1]
    for B, t in _field_stage(target, setup, cfg):
        x = 0.5 * (lower + upper)
        x[:b_slot:3] = 0.0          # start from the undriven anchor
        x[b_slot] = B
        if has_tf:
            x[b_slot + 1] = t
        starts.append((x, anchor_edge))
    uniform_edge = 0.1 * span
    for _ in range(max(0, cfg.restarts)):
        starts.append((rng.uniform(lower, upper), uniform_edge))

    best: OptimizerResult | None = None
    trace: list[float] = []
    total_iter = 0
    for x0, edge in starts:
        run = _nelder_mead_single(fun, x0, edge, cfg)
        total_iter += run.iterations
        incumbent = best.fun if best is not None else math.inf
        trace.extend(min(v, incumbent) for v in run.trace)
        if best is None or run.fun < best.fun:
            best = run
    # monotone incumbent trace across starts
    trace = list(np.minimum.accumulate(trace))
    if not math.isfinite(best.fun):
        raise ValueError("all simplex vertices evaluated to non-finite values")

    xbest = ControlVector(np.clip(best.x, lower, upper), lower, upper, has_tf)
    U, J, leak, _ = _evaluate_gate(xbest, target, setup, cfg)
    avg = None
    if target.dim == 2:
        avg = average_infidelity(U, target.matrix, seed=cfg.seed)
    return SynthesisResult(
        gate=target.name,
        encoding=target.encoding,
        control=[float(v) for v in xbest.clipped()],
        B=xbest.field(),
        objective_value=best.fun,
        infidelity=J,
        average_infidelity=avg,
        process_fidelity=1.0 - process_infidelity(U, target.matrix),
        leakage=leak,
        gate_matrix=U,
        trace=trace,
        iterations=total_iter,
        converged=best.converged,
        seed=cfg.seed,
        t_f=xbest.gate_time(cfg),
        dt=cfg.dt,
        n_ph=setup.n_ph,
        bounds_lower=[float(v) for v in lower],
        bounds_upper=[float(v) for v in upper],
    )


def photon_cutoff_margin(result: SynthesisResult, target: GateTarget,
                         setup: SynthesisSetup, cfg: OptimizerConfig) -> float:
    """|J(n_ph + 1) - J(n_ph)| at the stored optimum (convergence gate)."""
    lower = np.array(result.bounds_lower)
    upper = np.array(result.bounds_upper)
    x = ControlVector(np.array(result.control), lower, upper, cfg.optimize_t_f)
    _, J0, _, _ = _evaluate_gate(x, target, setup, cfg)
    _, J1, _, _ = _evaluate_gate(x, target, setup, cfg, n_ph=setup.n_ph + 1)
    return abs(J1 - J0)


def fidelity_scan_B(target: GateTarget, train: PulseTrain, B_values,
                    setup: SynthesisSetup, cfg: OptimizerConfig,
                    psi0=None) -> np.ndarray:
    """Fidelity of the fixed pulse train as the field is scanned.

    Qubit encodings score the state fidelity |<psi0| U+(B) V |psi0>|^2
    (default psi0 = cos(pi/5)|0> + exp(i pi/3) sin(pi/5)|1>); the qudit
    uses the process fidelity |Tr(U+ V)|^2 / N^2.  Returns rows (B, F).
    """
    if target.dim == 2 and psi0 is None:
        psi0 = np.array([math.cos(math.pi / 5),
                         np.exp(1j * math.pi / 3) * math.sin(math.pi / 5)])
    rows = []
    for B in B_values:
        params = setup.effective_params(float(B))
        labels = target.labels(ProductBasis(params.n_ph))
        U, _ = propagator(params, train, cfg.t_f, cfg.dt, labels)
        if target.dim == 2:
            fid = float(abs(np.vdot(psi0, U.conj().T @ target.matrix @ psi0)) ** 2)
        else:
            fid = 1.0 - process_infidelity(U, target.matrix)
        rows.append((float(B), fid))
    return np.array(rows)
