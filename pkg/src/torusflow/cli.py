"""Command-line surface.

Subcommands: run (one configured simulation), sweep (the eps convergence
study), audit (recompute diagnostics from stored snapshots), dispersion
(acoustic frequency probe).  Exit codes: 0 success, 2 config error,
3 numerical failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import glob
import sys
from pathlib import Path

import numpy as np

from .constitutive import Constitutive
from .diagnostics import energy_compressible, energy_incompressible
from .dynamics import (
    IncompressibleState,
    initial_from_preset,
    well_prepared_initial,
)
from .errors import ConfigError, NumericsError, SnapshotError
from .io import (
    RunConfig,
    load_config,
    load_sweep_config,
    read_snapshot,
    snapshot_header,
    write_snapshot,
    write_timeseries,
)
from .spectral import divergence, integral
from .stepper import integrate
from .sweep import acoustic_dispersion_check, run_sweep, with_eps_list

_RUN_COLUMNS_COMPRESSIBLE = [
    "time",
    "kinetic",
    "internal",
    "gradient",
    "potential",
    "total",
    "dissipation",
    "mass",
    "phase_mass",
]
_RUN_COLUMNS_INCOMPRESSIBLE = [
    "time",
    "kinetic",
    "gradient",
    "potential",
    "total",
    "dissipation",
    "phase_mass",
    "div_u_max",
]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one configured simulation")
    run.add_argument("--config", required=True, help="path to a run config (JSON)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument(
        "--snapshots-every",
        type=int,
        default=0,
        metavar="N",
        help="write a snapshot every N accepted steps (0 = never)",
    )
    run.add_argument("--quiet", action="store_true", help="suppress the summary line")

    sweep = sub.add_parser("sweep", help="run the eps convergence sweep")
    sweep.add_argument("--config", required=True, help="path to a sweep config (JSON)")
    sweep.add_argument("--out", default=None, help="output directory")
    sweep.add_argument(
        "--eps", default=None, help="override eps list, comma separated (e.g. 0.4,0.2)"
    )
    sweep.add_argument(
        "--parallel", type=int, default=1, metavar="K", help="worker processes"
    )

    audit = sub.add_parser("audit", help="recompute diagnostics from snapshots")
    audit.add_argument("--snapshots", required=True, help="snapshot glob pattern")
    audit.add_argument("--out", required=True, help="output CSV path")
    audit.add_argument(
        "--config",
        default=None,
        help="optional run config supplying the constitutive block",
    )

    disp = sub.add_parser("dispersion", help="acoustic dispersion probe")
    disp.add_argument("--eps", type=float, required=True)
    disp.add_argument("--k", type=int, required=True, help="density mode index")
    disp.add_argument(
        "--config",
        default=None,
        help="optional run config supplying the constitutive block",
    )
    return p


def _constitutive_from(config_path) -> Constitutive:
    if config_path is None:
        return Constitutive()
    return load_config(config_path).constitutive


def _initial_state(cfg: RunConfig):
    u0, phi0 = initial_from_preset(cfg.initial, cfg.grid)
    if cfg.regime == "compressible":
        return well_prepared_initial(
            u0, phi0, cfg.eps, cfg.kappa0, cfg.seed, cfg.model
        )
    return IncompressibleState(u0, phi0, cfg.model)


def _run_row(state, c, t: float) -> dict:
    if hasattr(state, "rho"):
        rep = energy_compressible(state, c, time=t)
        return {
            "time": t,
            "kinetic": rep.kinetic,
            "internal": rep.internal,
            "gradient": rep.gradient,
            "potential": rep.potential,
            "total": rep.total,
            "dissipation": rep.dissipation,
            "mass": integral(state.rho),
            "phase_mass": integral(state.q),
        }
    rep = energy_incompressible(state, c, time=t)
    return {
        "time": t,
        "kinetic": rep.kinetic,
        "gradient": rep.gradient,
        "potential": rep.potential,
        "total": rep.total,
        "dissipation": rep.dissipation,
        "phase_mass": integral(state.phi),
        "div_u_max": float(np.max(np.abs(divergence(state.u).values))),
    }


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = Path(args.out or cfg.outdir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    c = cfg.constitutive
    state = _initial_state(cfg)
    columns = (
        _RUN_COLUMNS_COMPRESSIBLE
        if cfg.regime == "compressible"
        else _RUN_COLUMNS_INCOMPRESSIBLE
    )

    rows = [_run_row(state, c, 0.0)]
    step_counter = [0]
    if args.snapshots_every:
        write_snapshot(state, outdir / "snap_000000.bin", time=0.0)

    def observer(t, st):
        step_counter[0] += 1
        k = step_counter[0]
        if k % cfg.sample_cadence == 0:
            rows.append(_run_row(st, c, t))
        if args.snapshots_every and k % args.snapshots_every == 0:
            write_snapshot(st, outdir / f"snap_{k:06d}.bin", time=t)

    samples = integrate(state, c, cfg.stepper, [cfg.stepper.t_end], observer=observer)
    t_final, final_state = samples[-1]
    if step_counter[0] % cfg.sample_cadence != 0:
        rows.append(_run_row(final_state, c, t_final))
    if args.snapshots_every and step_counter[0] % args.snapshots_every != 0:
        write_snapshot(final_state, outdir / f"snap_{step_counter[0]:06d}.bin", time=t_final)

    csv_path = outdir / "timeseries.csv"
    write_timeseries(rows, csv_path, columns)
    if not args.quiet:
        print(
            f"run complete: {step_counter[0]} steps to t = {t_final:g}, "
            f"total energy {rows[-1]['total']:.6e}, wrote {csv_path}"
        )
    return 0


_SWEEP_ERROR_COLUMNS = [
    "eps",
    "failed",
    "reason",
    "err_u",
    "err_phi",
    "err_combined",
    "err_rho",
    "err_grad_rho",
    "err_time_integrated",
]


def _cmd_sweep(args) -> int:
    cfg, c = load_sweep_config(args.config)
    if args.eps:
        try:
            eps_list = tuple(float(tok) for tok in args.eps.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --eps override {args.eps!r}: {exc}") from exc
        try:
            cfg = with_eps_list(cfg, eps_list)
        except ValueError as exc:
            raise ConfigError(f"bad --eps override: {exc}") from exc
    if args.parallel < 1:
        raise ConfigError(f"--parallel must be >= 1, got {args.parallel}")

    result = run_sweep(cfg, c, parallel=args.parallel)
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)

    err_rows = []
    for r in result.records:
        row = {k: getattr(r, k) for k in _SWEEP_ERROR_COLUMNS}
        if r.failed:
            # failed legs carry nan errors; emit empty cells instead of
            # tripping the finite-values contract of the CSV writer
            for k in _SWEEP_ERROR_COLUMNS[3:]:
                row[k] = ""
        err_rows.append(row)
    write_timeseries(err_rows, outdir / "sweep_errors.csv", _SWEEP_ERROR_COLUMNS)

    slope_rows = [
        {"family": fam, "slope": s, "intercept": b, "r2": r2}
        for fam, (s, b, r2) in sorted(result.slopes.items())
    ]
    write_timeseries(
        slope_rows, outdir / "sweep_slopes.csv", ["family", "slope", "intercept", "r2"]
    )

    mod_rows = []
    for r in result.records:
        if r.failed:
            continue
        for t, dist, full in zip(result.sample_times, r.distance_trace, r.full_trace):
            mod_rows.append({"eps": r.eps, "time": t, "distance": dist, "full": full})
    write_timeseries(
        mod_rows, outdir / "sweep_modulated.csv", ["eps", "time", "distance", "full"]
    )

    failed = [r for r in result.records if r.failed]
    for r in failed:
        print(f"eps = {r.eps:g} failed: {r.reason}", file=sys.stderr)
    for fam, (s, _, r2) in sorted(result.slopes.items()):
        print(f"{fam}: slope {s:.3f} (r2 {r2:.4f})")
    print(f"wrote sweep tables to {outdir}")
    if failed and len(failed) == len(result.records):
        return 3
    return 0


def _cmd_audit(args) -> int:
    paths = sorted(glob.glob(args.snapshots))
    if not paths:
        raise ConfigError(f"no snapshots match {args.snapshots!r}")
    c = _constitutive_from(args.config)
    rows = []
    columns = None
    for p in paths:
        header = snapshot_header(p)
        state = read_snapshot(p)
        row = _run_row(state, c, float(header["time"]))
        row = {"snapshot": Path(p).name, **row}
        if columns is None:
            columns = list(row.keys())
        rows.append(row)
    write_timeseries(rows, args.out, columns)
    print(f"audited {len(rows)} snapshots -> {args.out}")
    return 0


def _cmd_dispersion(args) -> int:
    c = _constitutive_from(args.config)
    amplitude = 1e-3 * args.eps**2
    measured, predicted = acoustic_dispersion_check(args.eps, args.k, amplitude, c)
    rel = abs(measured - predicted) / predicted
    print(
        f"mode k = {args.k}, eps = {args.eps:g}: measured {measured:.6f}, "
        f"predicted {predicted:.6f}, relative error {rel:.3e}"
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "dispersion":
            return _cmd_dispersion(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SnapshotError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
