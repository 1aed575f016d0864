"""Batch command-line front end.

Three subcommands: ``run`` executes one simulation and writes CSV/JSON
artifacts, ``certify`` samples random admissible states and certifies the
spectral and definiteness claims for a mixture, ``presets`` lists the
bundled scenarios.  All floating-point output uses shortest round-trip
formatting, so identical configurations produce byte-identical files.

Exit codes: 0 clean, 1 solver abort, 2 audit or certification failure,
64 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import (
    RunConfig,
    config_from_pairs,
    materialize,
    materialize_spec,
    scan_config_lines,
)
from .diagnostics import fit_decay_rate, reconstruct_fluxes
from .errors import (
    AuditFailure,
    InadmissibleInitialData,
    InsufficientData,
    NonPositiveEntropy,
    ParseError,
    SimulationAborted,
    ValidationError,
)
from .grid import Grid1D, integrate
from .mixture import MixtureSpec, c_to_w, full_concentrations, mobility_matrix
from .scenarios import PRESETS, heat_analytic
from .spectra import certify_friction_spectrum, certify_reduced_spectrum
from .stepper import SimulationResult, regularize_initial, run_simulation


def _f(x) -> str:
    return repr(float(x))


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


class RunCollector:
    """Per-step hook gathering flux, uphill, and distance-bound telemetry.

    Flux reconstruction happens on every accepted step; snapshots are
    written on the configured cadence.  The distance bound compares each
    species' L1 distance from the reference composition against the
    square root of twice the domain length times the relative entropy.
    """

    def __init__(
        self,
        spec: MixtureSpec,
        grid: Grid1D,
        reference: np.ndarray,
        out_dir: Path | None,
        snapshot_every: int,
    ):
        self.spec = spec
        self.grid = grid
        self.reference = reference
        self.out_dir = out_dir
        self.snapshot_every = snapshot_every
        self.uphill_max = float("-inf")
        self.flux_residual_max = 0.0
        self.pinsker_ok = True
        self.pinsker_margin_min = float("inf")
        self.picard_total = 0
        self.snapshots: list[str] = []
        self.last_snapshot_step = -1

    def write_snapshot(self, k: int, c: np.ndarray, w: np.ndarray) -> None:
        if self.out_dir is None:
            return
        n1 = self.spec.n_species
        n = self.spec.n_reduced
        header = (
            "x,"
            + ",".join(f"c_{i + 1}" for i in range(n1))
            + ","
            + ",".join(f"w_{i + 1}" for i in range(n))
        )
        cf = full_concentrations(c)
        lines = [header]
        for m, x in enumerate(self.grid.centers):
            parts = [_f(x)]
            parts += [_f(v) for v in cf[m]]
            parts += [_f(v) for v in w[m]]
            lines.append(",".join(parts))
        path = self.out_dir / f"snapshot_{k:04d}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self.snapshots.append(path.name)
        self.last_snapshot_step = k

    def __call__(self, k, t, c, w, record) -> None:
        self.picard_total += record.picard_iterations
        J, resid = reconstruct_fluxes(self.spec, self.grid, c)
        self.flux_residual_max = max(self.flux_residual_max, resid)
        g_red = (c[1:] - c[:-1]) / self.grid.h
        g_full = np.concatenate(
            [g_red, -g_red.sum(axis=-1, keepdims=True)], axis=-1
        )
        if g_full.size:
            self.uphill_max = max(
                self.uphill_max, float(np.max(J[1:-1] * g_full))
            )
        cf = full_concentrations(c)
        l1 = self.grid.h * np.sum(np.abs(cf - self.reference), axis=0)
        bound = np.sqrt(2.0 * self.grid.length * max(record.relative_entropy, 0.0))
        margin = float(bound - np.max(l1))
        self.pinsker_margin_min = min(self.pinsker_margin_min, margin)
        if margin < -1e-12:
            self.pinsker_ok = False
        if self.snapshot_every > 0 and k % self.snapshot_every == 0:
            self.write_snapshot(k, c, w)


def _write_timeseries(path: Path, records) -> None:
    n1 = records[0].masses.size
    header = (
        "time,entropy,relative_entropy,dissipation_raw,dissipation_sqrt,"
        + ",".join(f"mass_{i + 1}" for i in range(n1))
        + ",min_c,picard_iterations"
    )
    lines = [header]
    for r in records:
        parts = [
            _f(r.time),
            _f(r.entropy),
            _f(r.relative_entropy),
            _f(r.dissipation_raw),
            _f(r.dissipation_sqrt),
        ]
        parts += [_f(m) for m in r.masses]
        parts += [_f(r.min_c), str(r.picard_iterations)]
        lines.append(",".join(parts))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _verdict_dict(v) -> dict:
    return {
        "time": v.time,
        "entropy_ok": v.entropy_ok,
        "entropy_margin": v.entropy_margin,
        "mass_ok": v.mass_ok,
        "mass_margin": v.mass_margin,
        "bounds_ok": v.bounds_ok,
        "bounds_margin": v.bounds_margin,
        "dissipation_ok": v.dissipation_ok,
        "dissipation_margin": v.dissipation_margin,
        "passed": v.passed,
    }


def _analytic_l2_error(config: RunConfig, spec, grid, params, result) -> float | None:
    """L2 distance to the exact solution, for equal-diffusivity cosine runs."""
    if not config.initial.startswith("cosine:") or config.production != "zero":
        return None
    off = ~np.eye(spec.n_species, dtype=bool)
    if np.ptp(spec.D[off]) != 0.0 or result.c is None:
        return None
    amplitude = float(config.initial.partition(":")[2])
    amplitude *= 1.0 - spec.n_species * params.eta_floor
    exact = heat_analytic(
        grid, spec.n_reduced, amplitude, float(spec.D[0, 1]), result.t_final
    )
    diff = full_concentrations(result.c) - full_concentrations(exact)
    return float(np.sqrt(grid.h * np.sum(diff * diff)))


def _build_summary(
    config: RunConfig,
    spec,
    grid,
    params,
    result: SimulationResult,
    collector: RunCollector,
    exit_code: int,
    abort: str | None,
) -> dict:
    summary: dict = {
        "scenario": config.scenario,
        "species": spec.n_species,
        "cells": grid.cells,
        "length": grid.length,
        "tau": params.tau,
        "eps": params.eps,
        "t_final": result.t_final,
        "steps": result.steps,
        "exit_status": exit_code,
        "abort": abort,
        "clamp_count": result.clamp_count,
        "tau_retries": result.tau_retries,
        "picard_iterations_total": collector.picard_total,
    }
    try:
        lam, r2 = fit_decay_rate(result.records)
        summary["lambda_fit"] = lam
        summary["r_squared"] = r2
        summary["fit_error"] = None
    except (InsufficientData, NonPositiveEntropy) as exc:
        summary["lambda_fit"] = None
        summary["r_squared"] = None
        summary["fit_error"] = str(exc)
    final_masses = result.records[-1].masses
    drift = final_masses - result.initial_masses
    predicted = (
        -params.eps * result.w_time_integral + result.production_time_integral
    )
    summary["initial_masses"] = result.initial_masses
    summary["final_masses"] = final_masses
    summary["mass_drift"] = drift
    summary["predicted_mass_drift"] = np.concatenate(
        [predicted, [-predicted.sum()]]
    )
    summary["mass_identity_defect"] = float(
        np.max(np.abs(drift[:-1] - predicted))
    )
    if result.verdicts:
        summary["audit_margins"] = {
            "entropy_min": min(v.entropy_margin for v in result.verdicts),
            "mass_min": min(v.mass_margin for v in result.verdicts),
            "bounds_min": min(v.bounds_margin for v in result.verdicts),
            "dissipation_min": min(v.dissipation_margin for v in result.verdicts),
        }
        summary["audits_passed"] = all(v.passed for v in result.verdicts)
    else:
        summary["audit_margins"] = None
        summary["audits_passed"] = None
    has_uphill_data = collector.uphill_max != float("-inf")
    summary["uphill_event"] = bool(
        has_uphill_data and collector.uphill_max > 1e-12
    )
    summary["uphill_max_product"] = (
        collector.uphill_max if has_uphill_data else None
    )
    summary["max_flux_residual"] = collector.flux_residual_max
    summary["pinsker_ok"] = collector.pinsker_ok
    summary["pinsker_margin_min"] = (
        None
        if collector.pinsker_margin_min == float("inf")
        else collector.pinsker_margin_min
    )
    summary["l2_error_vs_analytic"] = _analytic_l2_error(
        config, spec, grid, params, result
    )
    summary["snapshots"] = collector.snapshots
    return summary


def run_scenario(config: RunConfig) -> int:
    """Execute one configured simulation and write its artifacts."""
    try:
        spec, grid, params, c0 = materialize(config)
        c_start = regularize_initial(spec, c0, params.eta_floor)
    except (ParseError, ValidationError, InadmissibleInitialData) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 64
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    masses0 = integrate(grid, full_concentrations(c_start))
    reference = masses0 / masses0.sum()
    snap_dir = out if config.emit_snapshots and config.snapshot_every > 0 else None
    collector = RunCollector(
        spec, grid, reference, snap_dir, config.snapshot_every
    )
    if snap_dir is not None:
        collector.write_snapshot(0, c_start, c_to_w(c_start))
    exit_code = 0
    abort = None
    try:
        result = run_simulation(
            spec,
            grid,
            params,
            c0,
            audit_mode=config.audit,
            hooks=[collector],
            record_every=config.record_every,
        )
    except SimulationAborted as exc:
        result = exc.partial
        exit_code, abort = 1, str(exc)
    except AuditFailure as exc:
        result = exc.partial
        exit_code, abort = 2, str(exc)
    else:
        if result.verdicts and not all(v.passed for v in result.verdicts):
            exit_code = 2
    if (
        snap_dir is not None
        and result.steps > 0
        and collector.last_snapshot_step != result.steps
    ):
        collector.write_snapshot(result.steps, result.c, result.w)
    written = []
    if config.emit_timeseries and result.records:
        path = out / "timeseries.csv"
        _write_timeseries(path, result.records)
        written.append(path)
    if config.emit_audit_json:
        path = out / "audit.json"
        _write_json(
            path,
            {
                "audit_mode": config.audit,
                "verdicts": [_verdict_dict(v) for v in result.verdicts],
            },
        )
        written.append(path)
    summary = _build_summary(
        config, spec, grid, params, result, collector, exit_code, abort
    )
    path = out / "run_summary.json"
    _write_json(path, summary)
    written.append(path)
    for p in written:
        print(f"wrote {p}")
    for name in collector.snapshots:
        print(f"wrote {out / name}")
    if abort:
        print(f"aborted: {abort}", file=sys.stderr)
    return exit_code


def certify(config: RunConfig, samples: int | None = None) -> int:
    """Certify spectral bands and mobility definiteness on random states."""
    try:
        spec = materialize_spec(config)
    except (ParseError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 64
    if samples is None:
        samples = config.samples
    rng = np.random.default_rng(config.seed)
    n1 = spec.n_species
    floor = 1e-12
    results = []
    all_passed = True
    for i in range(samples):
        cf = rng.dirichlet(np.ones(n1))
        c = (1.0 - n1 * floor) * cf[:-1] + floor
        rep_f = certify_friction_spectrum(spec, c)
        rep_r = certify_reduced_spectrum(spec, c)
        B = mobility_matrix(spec, c)
        scale = max(1.0, float(np.max(np.abs(B))))
        sym_residual = float(np.max(np.abs(B - B.T))) / scale
        min_eig = float(np.linalg.eigvalsh(0.5 * (B + B.T))[0])
        spd = sym_residual <= 1e-10 and min_eig > 0.0
        passed = bool(rep_f.in_band and rep_r.in_band and spd)
        all_passed = all_passed and passed
        results.append(
            {
                "sample": i,
                "c": list(c),
                "friction_eigenvalues": list(rep_f.eigenvalues),
                "friction_zero_multiplicity": rep_f.zero_multiplicity,
                "friction_in_band": rep_f.in_band,
                "reduced_eigenvalues": list(rep_r.eigenvalues),
                "reduced_in_band": rep_r.in_band,
                "mobility_symmetry_residual": sym_residual,
                "mobility_min_eigenvalue": min_eig,
                "mobility_spd": spd,
                "passed": passed,
            }
        )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "species": n1,
        "samples": samples,
        "seed": config.seed,
        "delta": spec.delta,
        "Delta": spec.Delta,
        "all_passed": all_passed,
        "results": results,
    }
    path = out / "certify.json"
    _write_json(path, payload)
    print(f"wrote {path}")
    return 0 if all_passed else 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(64, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="msdiff",
        description=(
            "Multicomponent cross-diffusion simulator with entropy-stable "
            "implicit time stepping and self-auditing invariants."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key=value configuration file")
    common.add_argument("--preset", help="start from a named preset scenario")
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    common.add_argument("--output-dir", help="directory for output artifacts")
    common.add_argument("--seed", type=int, help="seed for randomized sampling")
    sub.add_parser(
        "run", parents=[common], help="run one simulation and write artifacts"
    )
    sub.add_parser(
        "certify",
        parents=[common],
        help="certify spectral and definiteness claims on random states",
    )
    sub.add_parser("presets", help="list bundled scenario presets")
    return parser


def _collect_pairs(args) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        pairs.extend(scan_config_lines(text))
    for item in args.override:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValidationError("override", f"expected KEY=VALUE, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    if args.preset:
        pairs.append(("scenario", args.preset))
    if args.output_dir:
        pairs.append(("output_dir", args.output_dir))
    if args.seed is not None:
        pairs.append(("seed", str(args.seed)))
    return pairs


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for name in sorted(PRESETS):
            print(f"{name}: {PRESETS[name].description}")
        return 0
    try:
        pairs = _collect_pairs(args)
        config = config_from_pairs(pairs)
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return 64
    except (ParseError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 64
    if args.command == "run":
        return run_scenario(config)
    return certify(config)


if __name__ == "__main__":
    sys.exit(main())
