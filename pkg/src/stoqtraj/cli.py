"""Command-line entry point: ``stoqtraj --config run.json --out-dir out/``.

Exit status: 0 success or comparison pass, 1 numerical failure or tolerance
breach, 2 configuration error. Failures print ``ERROR <code> <message>`` on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import emit_trajectory_circuit, write_gate_file
from .config import RunConfig, circuit_parameters, parse_config
from .convergence import DEFAULT_DTS, measure_strong_order, rode_refinement_factor
from .ensemble import (
    AbsRule,
    ItoEngine,
    RodeEngine,
    SleEngine,
    StderrRule,
    StratEngine,
    compare,
    run_ensemble,
)
from .errors import NumericalBlowup, StoqtrajError
from .ito_sse import EM, MILSTEIN, ItoModel
from .master import (
    LindbladModel,
    RedfieldModel,
    lindblad_evolve,
    redfield_evolve,
    white_noise_gamma,
    white_noise_sle_evolve,
)
from .noise import RngStream, WhiteNoise, covariance_form, sample_wiener_increments, write_wiener_path
from .rode import HEUN, MIDPOINT, WEAK_COUPLING_LIMIT, RodeModel, coupling_ratio
from .strat_unitary import StratModel

# -- model construction ----------------------------------------------------------

def build_engine(cfg: RunConfig):
    s, noise = cfg.system, cfg.noise
    if cfg.engine in ("ito-em", "ito-milstein"):
        scheme = EM if cfg.engine == "ito-em" else MILSTEIN
        return ItoEngine(ItoModel(s.H, s.noise_operator_B, noise.sigma), scheme)
    if cfg.engine == "strat":
        return StratEngine(StratModel(s.H, s.R, noise.sigma))
    if cfg.engine in ("rode-midpoint", "rode-heun"):
        return RodeEngine(RodeModel(s.H, s.R, noise), MIDPOINT if cfg.engine == "rode-midpoint" else HEUN)
    return SleEngine(s.H, s.R, noise, tuple(s.channels))


def _initial(cfg: RunConfig):
    if cfg.engine == "sle":
        return cfg.system.initial_rho
    return cfg.system.initial_ket


def oracle_densities(cfg: RunConfig) -> np.ndarray:
    """Deterministic reference ``rho(k dt)`` for ``cfg.oracle``."""
    s = cfg.system
    rho0 = s.initial_rho
    if cfg.oracle == "lindblad":
        sigma = cfg.noise.sigma
        op = s.noise_operator_B if cfg.engine.startswith("ito") else s.R
        model = LindbladModel(s.H, ((op, sigma**2),) + tuple(s.channels))
        return lindblad_evolve(model, rho0, cfg.dt, cfg.n_steps)
    if cfg.oracle == "white-sle":
        return white_noise_sle_evolve(s.H, s.R, white_noise_gamma(cfg.noise.sigma), rho0, cfg.dt, cfg.n_steps)
    model = RedfieldModel(s.H, s.R, covariance_form(cfg.noise))
    return redfield_evolve(model, rho0, cfg.dt, cfg.n_steps)


def tolerance_rule(cfg: RunConfig):
    tol = cfg.tolerance
    if tol["rule"] == "abs":
        return AbsRule(tol["eps"])
    return StderrRule(tol["k"], tol["floor"])


# -- CSV ----------------------------------------------------------------------------

def _header_line(cfg: RunConfig) -> str:
    return f"# stoqtraj {__version__} mode={cfg.mode} config_sha256={cfg.sha256()}\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def _entry_columns(prefix: str, dim: int, matrix: bool) -> list[str]:
    if matrix:
        idx = [f"{i}{j}" for i in range(dim) for j in range(dim)]
    else:
        idx = [str(i) for i in range(dim)]
    return [f"{part}_{prefix}{k}" for k in idx for part in ("re", "im")]


def _entry_values(a: np.ndarray) -> list[str]:
    flat = np.asarray(a).reshape(-1)
    return [v for z in flat for v in (_fmt(z.real), _fmt(z.imag))]


def write_csv(path: Path, cfg: RunConfig, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(_header_line(cfg))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _observable_values(ops: dict, rho: np.ndarray) -> dict[str, np.ndarray]:
    return {k: np.real(np.einsum("ij,tji->t", op, rho)) for k, op in ops.items()}


def density_rows(times, rho, observables: dict, extra: dict | None = None):
    """Columns and rows for a stack of density matrices."""
    d = rho.shape[-1]
    purity = np.real(np.einsum("tij,tji->t", rho, rho))
    trace = np.real(np.trace(rho, axis1=-2, axis2=-1))
    obs = _observable_values(observables, rho)
    extra = extra or {}
    columns = ["t", *_entry_columns("rho", d, True), "purity", "trace", *obs, *extra]
    rows = []
    for i, t in enumerate(times):
        rows.append([_fmt(t), *_entry_values(rho[i]), _fmt(purity[i]), _fmt(trace[i]),
                     *(_fmt(v[i]) for v in obs.values()), *(_fmt(v[i]) for v in extra.values())])
    return columns, rows


# -- modes -----------------------------------------------------------------------------

def run_trajectory(cfg: RunConfig, out: Path) -> int:
    engine = build_engine(cfg)
    stream = RngStream(cfg.seed, 0)
    states, blown = engine.run_batch(_initial(cfg), cfg.dt, cfg.n_steps, [stream])
    if blown[0]:
        raise NumericalBlowup(f"trajectory blew up; reduce dt={cfg.dt:g}")
    states = states[0]
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    if engine.kind == "ket":
        d = states.shape[-1]
        rho = np.einsum("ti,tj->tij", states, states.conj())
        norm = np.linalg.norm(states, axis=-1)
        obs = _observable_values(cfg.observables, rho)
        columns = ["t", *_entry_columns("psi", d, False), "norm", *obs]
        rows = [[_fmt(t), *_entry_values(states[i]), _fmt(norm[i]), *(_fmt(v[i]) for v in obs.values())]
                for i, t in enumerate(times)]
    else:
        columns, rows = density_rows(times, states, cfg.observables)
    write_csv(out / "trajectory.csv", cfg, columns, rows)
    if cfg.dump_wiener and isinstance(cfg.noise, WhiteNoise):
        with open(out / "wiener_path.bin", "wb") as fh:
            write_wiener_path(sample_wiener_increments(cfg.dt, cfg.n_steps, stream), fh)
    return 0


def _ensemble(cfg: RunConfig, threads: int):
    return run_ensemble(build_engine(cfg), _initial(cfg), cfg.N, cfg.dt, cfg.n_steps,
                        cfg.seed, cfg.observables, workers=threads)


def write_ensemble_csv(path: Path, cfg: RunConfig, result) -> None:
    extra = {"stderr": result.stderr}
    extra.update({f"stderr_{k}": v for k, v in result.observable_stderr.items()})
    columns, rows = density_rows(result.times, result.mean_rho, cfg.observables, extra)
    write_csv(path, cfg, columns, rows)


def run_ensemble_mode(cfg: RunConfig, out: Path, threads: int) -> int:
    write_ensemble_csv(out / "ensemble.csv", cfg, _ensemble(cfg, threads))
    return 0


def run_master(cfg: RunConfig, out: Path) -> int:
    rho = oracle_densities(cfg)
    columns, rows = density_rows(cfg.dt * np.arange(cfg.n_steps + 1), rho, cfg.observables)
    write_csv(out / f"master_{cfg.oracle}.csv", cfg, columns, rows)
    return 0


def run_compare(cfg: RunConfig, out: Path, threads: int, quiet: bool) -> int:
    result = _ensemble(cfg, threads)
    reference = oracle_densities(cfg)
    report = compare(result, reference, tolerance_rule(cfg))
    report.notes["n_trajectories"] = result.n_trajectories
    report.notes["n_blown"] = result.n_blown
    if cfg.oracle == "redfield" and cfg.engine.startswith("rode"):
        ratio = coupling_ratio(RodeModel(cfg.system.H, cfg.system.R, cfg.noise))
        report.notes["coupling_ratio"] = ratio
        report.regime_ok = ratio <= WEAK_COUPLING_LIMIT
    write_ensemble_csv(out / "ensemble.csv", cfg, result)
    columns, rows = density_rows(result.times, reference, cfg.observables)
    write_csv(out / f"master_{cfg.oracle}.csv", cfg, columns, rows)
    text = _header_line(cfg) + report.to_text()
    (out / "compare_report.txt").write_text(text, encoding="utf-8", newline="")
    if not quiet:
        sys.stdout.write(report.to_text())
    return 0 if report.pass_ else 1


def run_emit_circuit(cfg: RunConfig, out: Path) -> int:
    eps, omega = circuit_parameters(cfg.system)
    width = max(5, len(str(cfg.N - 1)))
    for i in range(cfg.N):
        seq = emit_trajectory_circuit(eps, omega, cfg.noise.sigma, cfg.dt, cfg.n_steps,
                                      RngStream(cfg.seed, i))
        with open(out / f"circuit_{i:0{width}d}.txt", "w", encoding="utf-8", newline="") as fh:
            write_gate_file(seq, fh, {"config_sha256": cfg.sha256()})
    return 0


def run_convergence(cfg: RunConfig, out: Path, quiet: bool) -> int:
    conv = cfg.convergence
    T = cfg.dt * cfg.n_steps
    psi0 = cfg.system.initial_ket
    if cfg.engine.startswith("ito"):
        model = ItoModel(cfg.system.H, cfg.system.noise_operator_B, cfg.noise.sigma)
        report = measure_strong_order(model, psi0, T, conv.get("dts", DEFAULT_DTS),
                                      conv.get("n_paths", 200), cfg.seed, conv.get("refine", 16))
        text = report.to_text()
    else:
        model = RodeModel(cfg.system.H, cfg.system.R, cfg.noise)
        factor = rode_refinement_factor(model, psi0, T, cfg.dt, conv.get("n_paths", 50), cfg.seed)
        text = f"refinement_factor {factor:.4f}\n"
    (out / "convergence_report.txt").write_text(_header_line(cfg) + text, encoding="utf-8", newline="")
    if not quiet:
        sys.stdout.write(text)
    return 0


def run(cfg: RunConfig, out_dir: Path, threads: int = 1, quiet: bool = False) -> int:
    """Execute ``cfg``, writing artifacts into ``out_dir``; returns the exit status."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "trajectory":
        return run_trajectory(cfg, out_dir)
    if cfg.mode == "ensemble":
        return run_ensemble_mode(cfg, out_dir, threads)
    if cfg.mode == "master":
        return run_master(cfg, out_dir)
    if cfg.mode == "compare":
        return run_compare(cfg, out_dir, threads, quiet)
    if cfg.mode == "emit-circuit":
        return run_emit_circuit(cfg, out_dir)
    return run_convergence(cfg, out_dir, quiet)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stoqtraj", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs")
    p.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    p.add_argument("--quiet", action="store_true", help="suppress report output")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("ERROR ValidationError --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"ERROR ConfigUnreadable {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        return run(cfg, args.out_dir, args.threads, args.quiet)
    except StoqtrajError as exc:
        print(f"ERROR {exc.code} {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ERROR {type(exc).__name__} {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
