"""Command-line orchestration: config, caching, CSV export, run manifests.

Subcommands: coulomb, spectrum, response, synthesize, evolve, scan.  Each
run validates its JSON config against the published schema (unknown keys
rejected), writes plot-ready CSV files (comma separated, header row, 17
significant digits) plus a manifest listing every produced file.  CSV
bodies are deterministic for a fixed config and seed; timestamps live in
the manifest only.

Exit codes: 0 success, 2 usage/config error, 3 numerical accuracy
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .basis import MaterialParams, build_landau_basis, alpha_ratio
from .coulomb import (
    FORM_FACTOR_2D,
    QuadratureAccuracyError,
    build_coulomb_table,
    form_factor,
)
from .control import (
    OptimizerConfig,
    SynthesisSetup,
    bloch_trajectory,
    fidelity_scan_B,
    gate_matrix,
    repeated_application,
    state_tomography,
    synthesize,
    SynthesisResult,
)
from .effective import (
    IntegrationAccuracyError,
    ProductBasis,
    PulseTrain,
    evolve,
    format_label,
    propagator,
)
from .fewbody import ResponseModel, ResponseTable, crossing_estimate

CACHE_ENV = "QWGATES_CACHE"


class ConfigError(ValueError):
    """Configuration rejected before any computation."""


@dataclass
class RunConfig:
    material: MaterialParams
    levels: int
    per_level: int
    bgrid: tuple[float, float, float]
    coulomb: dict
    effective: dict
    optimizer: OptimizerConfig
    gate: dict
    evolve: dict
    scan: dict
    seed: int
    jobs: int | None
    output_dir: str
    cache_dir: str | None
    raw: dict = field(default_factory=dict)

    def b_values(self) -> np.ndarray:
        start, stop, step = self.bgrid
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(n), 12)


_DEFAULTS = {
    "basis": {"levels": 3, "per_level": 6},
    "bgrid": {"start": 0.1, "stop": 10.0, "step": 0.1},
    "coulomb": {"alphas": [0.5, 1.0, 2.0], "q_max": 6.0, "q_points": 121,
                "states_per_level": 3, "tolerance": 1e-9},
    "effective": {"n_ph": 3, "omega_cavity": None, "resonance_at_B": 2.5,
                  "omega_L": None, "frame_reference": None, "t_f": 10.0,
                  "dt": 1e-3},
    "gate": {"name": None, "encoding": "exciton"},
    "evolve": {"initial": "1", "B": 2.5, "t0": 0.0, "tf": 10.0, "stride": 20,
               "pulses": []},
    "scan": {"b_start": 0.5, "b_stop": 10.0, "b_step": 0.05, "result": None,
             "pulses": []},
    "seed": 2024,
    "jobs": 1,
    "output_dir": "qwgates-run",
    "cache_dir": None,
}


def load_schema() -> dict:
    with resources.files("qwgates").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Read, validate and default-fill a run configuration."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    import jsonschema

    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid: {exc.message}") from exc
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in _DEFAULTS.items()}
    for key, value in data.items():
        if isinstance(value, dict):
            merged.setdefault(key, {}).update(value)
        else:
            merged[key] = value
    material = MaterialParams(**data.get("material", {}))
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if name:
            merged[section][name] = value
        else:
            merged[section] = value
    optimizer_kwargs = dict(merged.get("optimizer", {}))
    for tuple_key in ("amp_bounds", "width_bounds", "b_bounds"):
        if optimizer_kwargs.get(tuple_key) is not None:
            optimizer_kwargs[tuple_key] = tuple(optimizer_kwargs[tuple_key])
    optimizer_kwargs.setdefault("seed", merged["seed"])
    optimizer_kwargs.setdefault("t_f", merged["effective"]["t_f"])
    optimizer_kwargs.setdefault("dt", merged["effective"]["dt"])
    try:
        optimizer = OptimizerConfig(**optimizer_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer config invalid: {exc}") from exc
    bgrid = merged["bgrid"]
    if bgrid["stop"] < bgrid["start"]:
        raise ConfigError("bgrid.stop must be >= bgrid.start")
    return RunConfig(
        material=material,
        levels=merged["basis"]["levels"],
        per_level=merged["basis"]["per_level"],
        bgrid=(bgrid["start"], bgrid["stop"], bgrid["step"]),
        coulomb=merged["coulomb"],
        effective=merged["effective"],
        optimizer=optimizer,
        gate=merged["gate"],
        evolve=merged["evolve"],
        scan=merged["scan"],
        seed=merged["seed"],
        jobs=merged["jobs"],
        output_dir=merged["output_dir"],
        cache_dir=merged["cache_dir"] or os.environ.get(CACHE_ENV),
        raw=data,
    )


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_csv(path: Path, header: list[str], rows) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(float(v)) for v in row) + "\n")
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunWriter:
    """Collects produced files and writes the manifest atomically at the end."""

    def __init__(self, command: str, config: RunConfig, config_path: str | None):
        self.command = command
        self.config = config
        self.outdir = Path(config.output_dir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.started = datetime.now(timezone.utc).isoformat()
        self.outputs: list[str] = []
        self.extras: dict = {}
        self.input_hashes: dict = {}
        if config_path:
            self.input_hashes["config"] = _sha256(Path(config_path))

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.outdir / name
        write_csv(path, header, rows)
        self.outputs.append(name)
        return path

    def text(self, name: str, payload: str) -> Path:
        path = self.outdir / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)
        self.outputs.append(name)
        return path

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "started_utc": self.started,
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "config": _config_echo(self.config),
            "input_hashes": self.input_hashes,
            "outputs": sorted(self.outputs),
            "extras": self.extras,
        }
        path = self.outdir / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True),
                       encoding="utf-8")
        os.replace(tmp, path)
        return path


def _config_echo(config: RunConfig) -> dict:
    echo = {
        "material": asdict(config.material),
        "basis": {"levels": config.levels, "per_level": config.per_level},
        "bgrid": dict(zip(("start", "stop", "step"), config.bgrid)),
        "coulomb": config.coulomb,
        "effective": config.effective,
        "optimizer": asdict(config.optimizer),
        "gate": config.gate,
        "evolve": config.evolve,
        "scan": config.scan,
        "seed": config.seed,
        "jobs": config.jobs,
        "output_dir": config.output_dir,
        "cache_dir": config.cache_dir,
    }
    return echo


# ---------------------------------------------------------------------------
# response caching


def _response_cache_key(config: RunConfig) -> str:
    payload = json.dumps(
        {
            "material": asdict(config.material),
            "levels": config.levels,
            "per_level": config.per_level,
            "bgrid": config.bgrid,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def get_response_table(config: RunConfig, writer: RunWriter | None = None):
    """Response table for the configured grid, via the cache when present."""
    cache_path = None
    if config.cache_dir:
        cache_dir = Path(config.cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = cache_dir / f"response_{_response_cache_key(config)}.csv"
        if cache_path.exists():
            if writer is not None:
                writer.extras["response_cache"] = {"hit": True,
                                                   "path": str(cache_path)}
            return ResponseTable.from_csv(cache_path)
    model = ResponseModel(config.material, config.levels, config.per_level)
    b_values = config.b_values()
    jobs = config.jobs or os.cpu_count() or 1
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda b: model.response(float(b)).as_row(),
                                 b_values))
    else:
        rows = [model.response(float(b)).as_row() for b in b_values]
    table = ResponseTable(np.asarray(b_values, dtype=float), np.asarray(rows))
    if cache_path is not None:
        table.to_csv(cache_path)
        if writer is not None:
            writer.extras["response_cache"] = {"hit": False,
                                               "path": str(cache_path)}
    return table


def build_setup(config: RunConfig, table: ResponseTable) -> SynthesisSetup:
    eff = config.effective
    omega_cavity = eff.get("omega_cavity")
    if omega_cavity is None:
        b_ref = eff.get("resonance_at_B")
        if b_ref is None:
            raise ConfigError(
                "effective.omega_cavity or effective.resonance_at_B required")
        omega_cavity = table(float(b_ref)).omega_X
    return SynthesisSetup(
        response=table,
        g_X=config.material.g_X,
        g_T=config.material.g_T,
        omega_cavity=float(omega_cavity),
        omega_L=eff.get("omega_L"),
        n_ph=int(eff.get("n_ph", 3)),
        frame_reference=eff.get("frame_reference"),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_coulomb(config: RunConfig, writer: RunWriter) -> None:
    alphas = list(config.coulomb["alphas"])
    if not alphas:
        raise ConfigError("coulomb.alphas must not be empty")
    q = np.linspace(0.0, config.coulomb["q_max"], int(config.coulomb["q_points"]))
    cols = [q]
    header = ["q"]
    for alpha in alphas:
        if alpha == 0.0:
            cols.append(np.full_like(q, FORM_FACTOR_2D))
        else:
            cols.append(form_factor(alpha, q))
        header.append(f"F_alpha={alpha:g}")
    writer.csv("formfactor.csv", header, np.stack(cols, axis=1))

    basis = build_landau_basis(config.levels, config.per_level)
    nper = min(config.coulomb["states_per_level"], config.per_level)
    picks = [
        k * config.per_level + j for k in range(config.levels) for j in range(nper)
    ]
    header = ["B"] + [
        f"V_{i + 1}_n{basis.states[i].n}_l{basis.states[i].l}" for i in picks
    ]
    from .coulomb import ThetaTable, MAIN_GRID, CHECK_GRID

    theta_main = ThetaTable(basis, MAIN_GRID)
    theta_check = ThetaTable(basis, CHECK_GRID)
    rows = []
    for B in config.b_values():
        table = build_coulomb_table(
            basis, alpha_ratio(config.material.L, float(B)),
            tolerance=config.coulomb["tolerance"],
            theta_main=theta_main, theta_check=theta_check)
        rows.append([B] + [table.diagonal(i + 1) for i in picks])
    writer.csv("coulomb_vs_B.csv", header, rows)


def cmd_spectrum(config: RunConfig, writer: RunWriter) -> None:
    model = ResponseModel(config.material, config.levels, config.per_level)
    rows = []
    samples = []
    for B in config.b_values():
        bind = model.binding(float(B))
        e_s = bind.reference + bind.singlet
        e_t = bind.reference + bind.triplet
        rows.append([B, e_s, e_t, bind.reference, bind.singlet, bind.triplet])
        samples.append((float(B), bind.singlet, bind.triplet))
    writer.csv("binding.csv",
               ["B", "E_S", "E_T", "E_X_plus_e", "Eb_S", "Eb_T"], rows)
    crossing = crossing_estimate(samples) if len(samples) >= 4 else None
    writer.extras["crossing_estimate_T"] = crossing


def cmd_response(config: RunConfig, writer: RunWriter) -> None:
    table = get_response_table(config, writer)
    path = writer.outdir / "response.csv"
    table.to_csv(path)
    writer.outputs.append("response.csv")
    writer.extras["interpolation"] = (
        "cubic" if table.interpolable else "disabled (single grid point)")


def _initial_state(spec, labels, basis: ProductBasis) -> np.ndarray:
    """Initial state from a config entry: qudit index, label, or amplitudes."""
    psi = np.zeros(basis.dim, dtype=complex)
    if isinstance(spec, str):
        if spec.isdigit() and int(spec) < len(labels):
            psi[basis.index(labels[int(spec)])] = 1.0
        elif spec == "paper-qubit":
            psi[basis.index(labels[0])] = math.cos(math.pi / 5)
            psi[basis.index(labels[1])] = (
                math.sin(math.pi / 5) * np.exp(1j * math.pi / 3))
        elif spec == "paper-qudit":
            psi[basis.index(labels[1])] = 1.0 / math.sqrt(2)
            psi[basis.index(labels[2])] = 1j / math.sqrt(2)
        else:
            raise ConfigError(f"unknown initial state {spec!r}")
    else:
        amps = [complex(a[0], a[1]) for a in spec]
        if len(amps) > len(labels):
            raise ConfigError("initial amplitudes exceed the encoded subspace")
        for amp, lab in zip(amps, labels):
            psi[basis.index(lab)] = amp
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ConfigError("initial state must not be zero")
        psi /= norm
    return psi


def _target_from_config(config: RunConfig):
    name = config.gate.get("name")
    if not name:
        raise ConfigError("a target gate is required (config gate.name or --gate)")
    try:
        return gate_matrix(name, config.gate.get("encoding", "exciton"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_synthesize(config: RunConfig, writer: RunWriter, *,
                   with_trajectory=True, with_bscan=False,
                   with_tomography=False, repeat: int = 0) -> None:
    target = _target_from_config(config)
    table = get_response_table(config, writer)
    setup = build_setup(config, table)
    result = synthesize(target, setup, config.optimizer)
    writer.text("result.json", result.to_json())
    writer.csv("trace.csv", ["iteration", "best_objective"],
               [[i, v] for i, v in enumerate(result.trace)])
    writer.extras["gate"] = result.gate
    writer.extras["objective"] = result.objective_value
    writer.extras["process_fidelity"] = result.process_fidelity
    writer.extras["average_infidelity"] = result.average_infidelity
    writer.extras["optimal_B"] = result.B

    params = setup.effective_params(result.B)
    basis = ProductBasis(params.n_ph)
    labels = target.labels(basis)
    if with_trajectory:
        init = "paper-qudit" if target.encoding == "qudit" else "paper-qubit"
        psi0 = _initial_state(init, labels, basis)
        traj = evolve(psi0, 0.0, config.optimizer.t_f, config.optimizer.dt,
                      params, result.pulse_train(),
                      stride=max(1, int(round(0.01 / config.optimizer.dt))))
        header = ["t"] + [f"p_{format_label(lab)}" for lab in basis.labels] + ["norm"]
        rows = np.column_stack([
            traj.times,
            np.abs(traj.states) ** 2,
            np.linalg.norm(traj.states, axis=1),
        ])
        writer.csv("trajectory.csv", header, rows)
        if target.dim == 2:
            bloch = bloch_trajectory(traj, labels)
            writer.csv("bloch.csv", ["t", "x", "y", "z"],
                       np.column_stack([traj.times, bloch]))
    if with_bscan:
        scan_cfg = config.scan
        b_values = np.arange(scan_cfg["b_start"], scan_cfg["b_stop"] + 1e-9,
                             scan_cfg["b_step"])
        rows = fidelity_scan_B(target, result.pulse_train(), b_values, setup,
                               config.optimizer)
        writer.csv("bscan.csv", ["B", "fidelity"], rows)
    if with_tomography:
        psi0 = _initial_state("paper-qudit" if target.encoding == "qudit"
                              else "paper-qubit", labels, basis)
        U, _ = propagator(params, result.pulse_train(), config.optimizer.t_f,
                          config.optimizer.dt, labels)
        sub0 = np.array([psi0[basis.index(lab)] for lab in labels])
        rho = np.outer(U @ sub0, (U @ sub0).conj())
        rows = [
            [i, j, rho[i, j].real, rho[i, j].imag]
            for i in range(rho.shape[0])
            for j in range(rho.shape[1])
        ]
        writer.csv("tomography.csv", ["row", "col", "re", "im"], rows)
    if repeat > 0:
        psi0 = np.zeros(len(labels), dtype=complex)
        psi0[1 if len(labels) > 2 else 0] = 1.0
        pops = repeated_application(result.gate_matrix, psi0, repeat)
        header = ["step"] + [f"p{i}" for i in range(len(labels))]
        writer.csv("repeat.csv", header,
                   [[k, *pops[k]] for k in range(repeat + 1)])


def cmd_evolve(config: RunConfig, writer: RunWriter) -> None:
    table = get_response_table(config, writer)
    setup = build_setup(config, table)
    ev = config.evolve
    params = setup.effective_params(float(ev["B"]))
    basis = ProductBasis(params.n_ph)
    labels = basis.qudit_labels
    psi0 = _initial_state(ev["initial"], labels, basis)
    train = PulseTrain(tuple(tuple(p) for p in ev["pulses"]))
    traj = evolve(psi0, float(ev["t0"]), float(ev["tf"]), config.effective["dt"],
                  params, train, stride=int(ev["stride"]))
    header = ["t"] + [f"p_{format_label(lab)}" for lab in basis.labels] + ["norm"]
    rows = np.column_stack([
        traj.times, np.abs(traj.states) ** 2,
        np.linalg.norm(traj.states, axis=1),
    ])
    writer.csv("trajectory.csv", header, rows)


def cmd_scan(config: RunConfig, writer: RunWriter) -> None:
    target = _target_from_config(config)
    table = get_response_table(config, writer)
    setup = build_setup(config, table)
    scan_cfg = config.scan
    if scan_cfg.get("result"):
        result = SynthesisResult.from_json(
            Path(scan_cfg["result"]).read_text(encoding="utf-8"))
        train = result.pulse_train()
    else:
        train = PulseTrain(tuple(tuple(p) for p in scan_cfg["pulses"]))
    b_values = np.arange(scan_cfg["b_start"], scan_cfg["b_stop"] + 1e-9,
                         scan_cfg["b_step"])
    jobs = config.jobs or os.cpu_count() or 1
    if jobs > 1:
        chunks = np.array_split(b_values, jobs * 4)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(
                lambda bs: fidelity_scan_B(target, train, bs, setup,
                                           config.optimizer),
                [c for c in chunks if len(c)]))
        rows = np.vstack(parts)
    else:
        rows = fidelity_scan_B(target, train, b_values, setup, config.optimizer)
    writer.csv("bscan.csv", ["B", "fidelity"], rows)


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qwgates",
        description="Field-tuned exciton/trion polariton gate synthesis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--cache-dir", help="cache directory (overrides config "
                       f"and ${CACHE_ENV})")
        p.add_argument("--jobs", type=int, help="parallel workers for scans")
        p.add_argument("--seed", type=int, help="rng seed (overrides config)")

    common(sub.add_parser("coulomb", help="form factor and matrix element tables"))
    common(sub.add_parser("spectrum", help="trion binding energies vs B"))
    common(sub.add_parser("response", help="effective-model response table"))
    syn = sub.add_parser("synthesize", help="optimize a gate")
    common(syn)
    syn.add_argument("--gate", help="target gate name (I X Y Z S T H iswap)")
    syn.add_argument("--encoding", choices=["exciton", "trion", "qudit"])
    syn.add_argument("--tf", type=float, help="gate time in ps")
    syn.add_argument("--bscan", action="store_true", help="also write bscan.csv")
    syn.add_argument("--tomography", action="store_true",
                     help="also write tomography.csv")
    syn.add_argument("--repeat", type=int, default=0,
                     help="repeated-application steps to record")
    syn.add_argument("--no-trajectory", action="store_true")
    common(sub.add_parser("evolve", help="propagate one initial state"))
    common(sub.add_parser("scan", help="fidelity vs B for fixed pulses"))
    return parser


def _overrides_from_args(args) -> dict:
    overrides = {}
    if args.output:
        overrides["output_dir"] = args.output
    if getattr(args, "cache_dir", None):
        overrides["cache_dir"] = args.cache_dir
    if args.jobs:
        overrides["jobs"] = args.jobs
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["optimizer.seed"] = args.seed
    if getattr(args, "gate", None):
        overrides["gate.name"] = args.gate
    if getattr(args, "encoding", None):
        overrides["gate.encoding"] = args.encoding
    if getattr(args, "tf", None):
        overrides["effective.t_f"] = args.tf
        overrides["optimizer.t_f"] = args.tf
    return overrides


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    writer = RunWriter(args.command, config, args.config)
    try:
        if args.command == "coulomb":
            cmd_coulomb(config, writer)
        elif args.command == "spectrum":
            cmd_spectrum(config, writer)
        elif args.command == "response":
            cmd_response(config, writer)
        elif args.command == "synthesize":
            cmd_synthesize(config, writer,
                           with_trajectory=not args.no_trajectory,
                           with_bscan=args.bscan,
                           with_tomography=args.tomography,
                           repeat=args.repeat)
        elif args.command == "evolve":
            cmd_evolve(config, writer)
        elif args.command == "scan":
            cmd_scan(config, writer)
        else:  # pragma: no cover
            return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureAccuracyError, IntegrationAccuracyError) as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        writer.extras["error"] = str(exc)
        writer.finish()
        return 3
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 4
    writer.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
