"""Scenario-driven command line: forcing -> stationary -> evolve -> verify.

Every run writes a manifest (config hash, version, per-phase wall-clock
timings) next to its outputs.  All randomness derives from the scenario
seed through counter-based Philox streams: stream 0 feeds the forcing
construction, 1 the evolution initial perturbation, 2 the verification
ensembles and 3 the manufactured fields, via ``Philox(key=seed).jumped(k)``
so alternate implementations can reproduce them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config
from .errors import ConfigError, NskError
from .evolution import PerturbationState, SteadyBackground, run_stability
from .forcing import ForcingSpec, build_forcing, mms_stationary
from .model import PhysParams, make_eos
from .snapshot import write_field
from .spectral import SpectralGrid, random_band_scalar, random_band_vector
from .stationary import make_trial_state, run_fixed_point
from .verify import (
    audit_decay,
    audit_kernel_decay,
    audit_linear_estimate,
    audit_linf_estimate,
    audit_regularization_limit,
    audit_weighted_estimate,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4
ALL_AUDITS = ("2.8", "2.80", "2.90", "kernel", "reg-limit")


def _stream(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed).jumped(k))


def _build(cfg: ScenarioConfig):
    grid = SpectralGrid(cfg.grid.n, cfg.grid.length, cfg.grid.dimension)
    p = cfg.physics
    params = PhysParams(mu=p.mu, mu_prime=p.mu_prime, kappa=p.kappa,
                        alpha_tilde=p.alpha_tilde, c_v=p.c_v,
                        rho_bar=p.rho_bar, theta_bar=p.theta_bar)
    e = cfg.eos
    if e.kind == "ideal-gas":
        eos = make_eos("ideal-gas", R=e.R)
    else:
        eos = make_eos("stiffened-gas", R=e.R, B=e.B, gamma=e.gamma,
                       rho_ref=e.rho_ref)
    return grid, params, eos


def _forcing_spec(cfg: ScenarioConfig) -> ForcingSpec:
    f = cfg.forcing
    return ForcingSpec(amplitude=f.amplitude, decay=f.decay,
                       width_frac=f.width_frac, kmin=f.kmin, kmax=f.kmax,
                       active=tuple(f.active))


def _version() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"],
                              capture_output=True, text=True, timeout=5,
                              cwd=Path(__file__).parent)
        tag = desc.stdout.strip() if desc.returncode == 0 else ""
    except Exception:
        tag = ""
    return f"nsk {__version__}" + (f" ({tag})" if tag else "")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, float) else str(x)
                              for x in row))
    path.write_text("\n".join(lines) + "\n")


def _manifest(out: Path, config_path, cfg: ScenarioConfig, seed: int,
              timings: dict) -> None:
    blob = Path(config_path).read_bytes() if config_path else b"<defaults>"
    doc = {
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "config_path": str(config_path) if config_path else None,
        "version": _version(),
        "seed": seed,
        "timings_seconds": timings,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(out / "manifest.json", doc)


def _dump_state_snapshots(out: Path, grid, state, prefix: str = ""):
    write_field(out / f"{prefix}sigma.fld", grid, state.sigma, f"{prefix}sigma")
    axes = "xyz"[:grid.dim]
    for j, ax in enumerate(axes):
        write_field(out / f"{prefix}v_{ax}.fld", grid, state.v[j], f"{prefix}v_{ax}")
    write_field(out / f"{prefix}vartheta.fld", grid, state.vartheta,
                f"{prefix}vartheta")
    write_field(out / f"{prefix}rho.fld", grid, state.rho, f"{prefix}rho")


def cmd_stationary(cfg: ScenarioConfig, out: Path, config_path, seed: int,
                   quiet: bool) -> int:
    timings = {}
    t0 = time.perf_counter()
    grid, params, eos = _build(cfg)
    fd = build_forcing(grid, _forcing_spec(cfg), _stream(seed, 0))
    timings["forcing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    state, report = run_fixed_point(
        grid, params, eos, fd, tol=cfg.stationary.tol,
        max_outer=cfg.stationary.max_outer,
        budget_threshold=cfg.stationary.budget_threshold)
    timings["stationary"] = time.perf_counter() - t0

    _dump_state_snapshots(out, grid, state)
    _write_json(out / "stationary_report.json", report.as_dict())
    _write_csv(out / "stationary_iterations.csv",
               "iter,lambda_update,contraction_ratio,residual_mass,"
               "residual_momentum,residual_energy", report.rows())
    from .norms import state_norm_report
    rep = state_norm_report(grid, state.sigma, state.v, state.vartheta,
                            density_dev=state.rho - params.rho_bar)
    (out / "stationary_norms.json").write_text(rep.to_json() + "\n")
    _manifest(out, config_path, cfg, seed, timings)
    if not quiet:
        print(f"stationary: converged={report.converged} "
              f"iterations={report.iterations} "
              f"residuals={report.residuals}")
    return EXIT_OK if report.converged else EXIT_SOLVER


def cmd_evolve(cfg: ScenarioConfig, out: Path, config_path, seed: int,
               quiet: bool) -> int:
    timings = {}
    grid, params, eos = _build(cfg)
    t0 = time.perf_counter()
    fd = build_forcing(grid, _forcing_spec(cfg), _stream(seed, 0))
    state, report = run_fixed_point(
        grid, params, eos, fd, tol=cfg.stationary.tol,
        max_outer=cfg.stationary.max_outer,
        budget_threshold=cfg.stationary.budget_threshold)
    timings["stationary"] = time.perf_counter() - t0

    bg = SteadyBackground.from_stationary(grid, params, eos, state, fd)
    ev = cfg.evolution
    rng = _stream(seed, 1)
    init = PerturbationState(
        ev.init_amplitude * random_band_scalar(grid, rng, kmin=ev.init_kmin,
                                               kmax=ev.init_kmax),
        ev.init_amplitude * random_band_vector(grid, rng, kmin=ev.init_kmin,
                                               kmax=ev.init_kmax),
        ev.init_amplitude * random_band_scalar(grid, rng, kmin=ev.init_kmin,
                                               kmax=ev.init_kmax))

    snapdir = out / "snapshots"
    counter = {"n": 0}

    def snapshot_cb(st):
        if ev.snapshot_every <= 0:
            return
        if counter["n"] % ev.snapshot_every == 0:
            snapdir.mkdir(exist_ok=True)
            tagged = f"t{counter['n']:06d}_"
            write_field(snapdir / f"{tagged}sigma.fld", grid, st.sigma, "sigma")
            write_field(snapdir / f"{tagged}vartheta.fld", grid, st.vartheta,
                        "vartheta")
        counter["n"] += 1

    t0 = time.perf_counter()
    final, ledger = run_stability(grid, params, eos, bg, init, dt=ev.dt,
                                  t_end=ev.t_end, record_every=ev.record_every,
                                  disable_exchange=ev.disable_exchange,
                                  scheme=ev.scheme, snapshot_cb=snapshot_cb)
    timings["evolve"] = time.perf_counter() - t0

    _write_csv(out / "evolve_series.csv", ledger.CSV_HEADER, ledger.rows())
    _write_json(out / "energy_ledger.json", {
        "a": list(ledger.coeffs.a), "b": list(ledger.coeffs.b),
        "B0": ledger.coeffs.B0, "B1": ledger.coeffs.B1,
        "monotone": ledger.monotone, "max_increase": ledger.max_increase,
        "fitted_C": ledger.fitted_C, "blowup": ledger.blowup,
        "steps": len(ledger.t) - 1,
    })
    _manifest(out, config_path, cfg, seed, timings)
    if not quiet:
        print(f"evolve: monotone={ledger.monotone} fitted_C={ledger.fitted_C:.3f} "
              f"Linf(end)/Linf(0)={ledger.Linf[-1] / max(ledger.Linf[0], 1e-300):.3e}")
    return EXIT_OK


def cmd_verify(cfg: ScenarioConfig, out: Path, config_path, seed: int,
               audits, quiet: bool) -> int:
    grid, params, eos = _build(cfg)
    from .model import stationary_coeffs
    sc = stationary_coeffs(params, eos)
    rng_seed = seed
    results = {}
    timings = {}
    selected = audits or ALL_AUDITS
    for name in selected:
        t0 = time.perf_counter()
        if name == "2.8":
            audit = audit_linear_estimate(grid, params, sc.gamma1, sc.gamma2,
                                          seed=rng_seed,
                                          ensemble=cfg.verification.ensemble)
            results[name] = audit.as_dict()
        elif name == "2.80":
            audit = audit_weighted_estimate(grid, params, eos, seed=rng_seed,
                                            ensemble=cfg.verification.ensemble_small)
            results[name] = audit.as_dict()
        elif name == "2.90":
            audit = audit_linf_estimate(grid, params, eos, seed=rng_seed,
                                        ensemble=cfg.verification.ensemble_small)
            results[name] = audit.as_dict()
        elif name == "kernel":
            results[name] = audit_kernel_decay(mu=params.mu, seed=rng_seed)
        elif name == "reg-limit":
            results[name] = audit_regularization_limit(grid, params, sc.gamma1,
                                                       sc.gamma2, seed=rng_seed)
        else:
            raise ConfigError(f"unknown audit {name!r}; choose from {ALL_AUDITS}")
        timings[name] = time.perf_counter() - t0
        if not quiet:
            print(f"audit {name}: passed={results[name]['passed']}")
    _write_json(out / "verify_report.json", results)
    _manifest(out, config_path, cfg, seed, timings)
    return EXIT_OK if all(r["passed"] for r in results.values()) else EXIT_AUDIT


def cmd_mms(cfg: ScenarioConfig, out: Path, config_path, seed: int,
            quiet: bool) -> int:
    grid, params, eos = _build(cfg)
    rng = _stream(seed, 3)
    amp, kmax = cfg.mms.amplitude, cfg.mms.kmax
    timings = {}
    t0 = time.perf_counter()
    P_bar = float(eos.pressure(params.rho_bar, params.theta_bar))
    P = P_bar + amp * random_band_scalar(grid, rng, kmin=1, kmax=kmax)
    v = amp * random_band_vector(grid, rng, kmin=1, kmax=kmax)
    th = params.theta_bar + amp * random_band_scalar(grid, rng, kmin=1, kmax=kmax)
    fd, residuals = mms_stationary(grid, params, eos, P, v, th)
    timings["mms_forcing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    state, report = run_fixed_point(grid, params, eos, fd,
                                    tol=cfg.stationary.tol,
                                    max_outer=cfg.stationary.max_outer,
                                    budget_threshold=float("inf"))
    timings["recovery"] = time.perf_counter() - t0

    exact = make_trial_state(grid, params, eos, P - P_bar, v,
                             th - params.theta_bar)
    lam_exact = exact.lambda_norm()
    lam_err = state.diff_lambda(exact) / max(lam_exact, 1e-300)
    table = {
        "forcing_residuals": residuals,
        "lambda_exact": lam_exact,
        "lambda_relative_error": lam_err,
        "sigma_max_error": float(np.max(np.abs(state.sigma - exact.sigma))),
        "v_max_error": float(np.max(np.abs(state.v - exact.v))),
        "vartheta_max_error": float(np.max(np.abs(state.vartheta - exact.vartheta))),
        "iterations": report.iterations,
        "converged": report.converged,
        "tolerance": cfg.mms.tol,
        "passed": bool(report.converged and lam_err < cfg.mms.tol),
    }
    _write_json(out / "mms_report.json", table)
    _manifest(out, config_path, cfg, seed, timings)
    if not quiet:
        print("manufactured-solution recovery")
        for key in ("lambda_relative_error", "sigma_max_error", "v_max_error",
                    "vartheta_max_error", "iterations", "passed"):
            print(f"  {key:24s} {table[key]}")
    return EXIT_OK if table["passed"] else EXIT_SOLVER


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nsk", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("stationary", "evolve", "verify", "mms"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="scenario file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (falls back to [output].directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="overrides the scenario seed")
        p.add_argument("--quiet", action="store_true")
        if name == "verify":
            p.add_argument("--audits", type=str, default=None,
                           help=f"comma list from {','.join(ALL_AUDITS)}")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        seed = args.seed if args.seed is not None else cfg.seed
        if seed < 0 or seed > 2**64 - 1:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.out is None:
            if not cfg.output.directory:
                raise ConfigError("no output directory: pass --out or set "
                                  "[output] directory in the scenario")
            args.out = Path(cfg.output.directory)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "stationary":
            return cmd_stationary(cfg, args.out, args.config, seed, args.quiet)
        if args.command == "evolve":
            return cmd_evolve(cfg, args.out, args.config, seed, args.quiet)
        if args.command == "verify":
            audits = args.audits.split(",") if args.audits else None
            return cmd_verify(cfg, args.out, args.config, seed, audits, args.quiet)
        if args.command == "mms":
            return cmd_mms(cfg, args.out, args.config, seed, args.quiet)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except NskError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
