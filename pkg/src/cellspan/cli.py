"""Command-line entry point: ``cellspan {run,lifespan,verify,sweep}``.

Exit codes: 0 success, 1 invariant or verification failure, 2 solver or
input failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, RunConfig, demo_config_path, parse_config
from .elliptic import REGULARIZED, VERIFICATION
from .lifespan import amplitude_certificate, tmax_sweep
from .parabolic import SimulationError, Trajectory, simulate, tau_continuation, trajectory_amplitude
from .verify import MMSCase, equilibrium_preservation, invariant_sweep, run_mms, uniqueness_sweep

log = logging.getLogger("cellspan")

EXIT_OK, EXIT_INVARIANT, EXIT_SOLVER = 0, 1, 2

APRIORI_AXES = ("c", "m", "delta", "q", "N", "d", "alpha0")
RUN_AXES = ("tau", "alpha2", "alpha4", "steps")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % v


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# --------------------------------------------------------------------------
# output writers


def field_rows(traj: Trajectory):
    """Rows of fields.csv: one per (recorded time, cell)."""
    from .geometry import REGION_NAMES

    problem = traj.problem
    mesh = problem.mesh
    p = problem.params
    chi = mesh.electrode
    yield ["t", "x", "region", "C", "phi_e", "phi_s", "S_e"]
    for s in traj.states:
        y3 = np.where(chi, s.pair.phi_s - s.pair.phi_e, 0.0)
        H, _, _, _ = kernels.kinetics(
            np.where(chi, problem.h.values, 1.0), np.where(chi, s.C, 1.0), y3,
            p.d, p.alpha2, problem.tau, problem.mode == REGULARIZED,
        )
        S = np.where(chi, 0.5 * p.alpha4 * H, 0.0)
        for i in range(mesh.n_cells):
            yield [s.t, mesh.centers[i], REGION_NAMES[int(mesh.tags[i])], s.C[i], s.pair.phi_e[i], s.pair.phi_s[i], S[i]]


def diagnostic_rows(traj: Trajectory):
    yield [
        "t", "outer_iters", "elliptic_iters", "newton_iters", "elliptic_residual",
        "concentration_residual", "min_C", "max_C", "a", "identity", "identity_rel",
        "mass_defect_rel", "bound_margin",
    ]
    # running amplitude over every step, not only recorded ones
    run_M, run_L = 1.0, 0.0
    C0 = traj.states[0].C
    run_M = max(run_M, float(np.max(C0)))
    run_L = float(np.max(1.0 / C0)) if np.all(C0 > 0) else np.inf
    for d in traj.diagnostics:
        run_M = max(run_M, d.max_C)
        run_L = max(run_L, 1.0 / d.min_C) if d.min_C > 0 else np.inf
        yield [
            d.t, d.outer_iters, d.elliptic_iters, d.newton_iters, d.elliptic_residual,
            d.concentration_residual, d.min_C, d.max_C, run_M * run_L, d.identity, d.identity_rel,
            d.mass_defect_rel, d.bound_margin,
        ]


def _write_run(traj: Trajectory, out: Path, suffix: str = "") -> None:
    _write_csv(out / f"fields{suffix}.csv", field_rows(traj))
    _write_csv(out / f"diagnostics{suffix}.csv", diagnostic_rows(traj))


# --------------------------------------------------------------------------
# subcommands


def _load(args) -> RunConfig:
    path = args.config or args.config_pos or demo_config_path()
    cfg = parse_config(path)
    if getattr(args, "verification_mode", False):
        cfg = replace(cfg, mode=VERIFICATION)
    return cfg


def _outdir(args, cfg: RunConfig | None) -> Path:
    out = Path(args.out or (cfg.out_dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_invariants(traj: Trajectory) -> bool:
    ok = True
    for name, res in invariant_sweep(traj).items():
        status = "pass" if res.passed else "FAIL"
        ok &= res.passed
        log.info("invariant %-14s %s  worst margin %.3e at t=%.6g", name, status, res.worst_margin, res.t_worst)
    return ok


def cmd_run(cfg: RunConfig, out: Path, continuation: bool = False) -> int:
    if continuation:
        try:
            res = tau_continuation(cfg)
        except SimulationError as exc:
            log.error("%s", exc)
            return EXIT_SOLVER
        ok = True
        rows = [["tau", "final_min_C", "final_max_C", "diff_to_previous"]]
        for k, (tau, traj) in enumerate(zip(res.taus, res.trajectories)):
            _write_run(traj, out, f"_tau{k}")
            ok &= _report_invariants(traj)
            rows.append([tau, float(np.min(traj.final.C)), float(np.max(traj.final.C)),
                         res.differences[k - 1] if k else float("nan")])
        _write_csv(out / "continuation.csv", rows)
        return EXIT_OK if ok else EXIT_INVARIANT

    try:
        traj = simulate(cfg)
    except SimulationError as exc:
        log.error("%s", exc)
        if exc.trajectory.states:
            _write_run(exc.trajectory, out)
        return EXIT_SOLVER
    _write_run(traj, out)
    ok = _report_invariants(traj)
    if cfg.mode == REGULARIZED:
        try:
            _, a = trajectory_amplitude(traj)
            report = cfg.lifespan()
            cert = amplitude_certificate(a, report)
            log.info("amplitude max %.6g vs s0 %.6g: %s", float(np.max(a)), report.s0,
                     "certified" if cert.all() else "flagged")
        except ValueError as exc:
            log.warning("amplitude unavailable: %s", exc)
    log.info("wrote %s", out)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_lifespan(cfg: RunConfig, out: Path) -> int:
    report = cfg.lifespan()
    text = "\n".join(report.as_lines()) + "\n"
    (out / "lifespan.txt").write_text(text)
    sys.stdout.write(text)
    bad = [k for k, v in report.residuals.items() if not v <= 1e-10]
    if bad:
        log.error("residuals above 1e-10: %s", ", ".join(bad))
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, cases) -> int:
    ok = True
    summary = []
    for case in cases:
        if case in ("mms-space", "mms-time", "mms-constant"):
            mms = {"mms-space": MMSCase.smooth_space, "mms-time": MMSCase.smooth_time,
                   "mms-constant": MMSCase.constant}[case]()
            table = run_mms(mms)
            _write_csv(out / f"convergence_{case}.csv", table.to_csv_rows())
            if case == "mms-constant":
                passed = bool(table.errors()[0] <= 1e-12)
                detail = f"error {table.errors()[0]:.3e}"
            else:
                orders = table.orders()
                lo, hi = (1.9, 2.1) if case == "mms-space" else (0.9, 1.1)
                passed = bool(np.all((orders >= lo) & (orders <= hi)))
                detail = "orders " + ", ".join(f"{o:.3f}" for o in orders)
        elif case == "equilibrium":
            drift = equilibrium_preservation(cfg)
            passed, detail = drift <= 1e-12, f"drift {drift:.3e}"
        elif case == "uniqueness":
            gap = uniqueness_sweep(cfg, 10)
            passed, detail = gap <= 1e-8, f"max gap {gap:.3e}"
        else:
            raise ValueError(f"unknown case {case!r}")
        ok &= passed
        summary.append(f"{case}: {'PASS' if passed else 'FAIL'} ({detail})")
    text = "\n".join(summary) + "\n"
    (out / "verify.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_INVARIANT


def _sweep_member(args):
    cfg, axis, value = args
    if axis == "tau":
        cfg = replace(cfg, tau=value)
    elif axis == "steps":
        n = int(value)
        cfg = replace(cfg, n_steps=n, dt=cfg.T_end / n)
    else:
        cfg = replace(cfg, params=replace(cfg.params, **{axis: value}))
    traj = simulate(cfg)
    _, a = trajectory_amplitude(traj)
    ok = all(r.passed for r in invariant_sweep(traj).values())
    return [value, float(np.min(traj.final.C)), float(np.max(traj.final.C)), float(a[-1]), int(ok)]


def cmd_sweep(cfg: RunConfig, out: Path, axis: str, values, jobs: int = 1) -> int:
    if axis in APRIORI_AXES:
        values = [int(v) if axis == "N" else v for v in values]
        reports = tmax_sweep(cfg.apriori, axis, values)
        rows = [[axis, "gamma", "s0", "eps0", "Tmax", "log_Tmax"]]
        rows += [[v, r.gamma, r.s0, r.eps0, r.Tmax, r.log_Tmax] for v, r in zip(values, reports)]
        _write_csv(out / "sweep.csv", rows)
        return EXIT_OK
    if axis not in RUN_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {APRIORI_AXES + RUN_AXES}")
    members = [(cfg, axis, v) for v in values]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_member, members))
        else:
            results = [_sweep_member(m) for m in members]
    except SimulationError as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    _write_csv(out / "sweep.csv", [[axis, "final_min_C", "final_max_C", "a_final", "invariants_ok"]] + results)
    return EXIT_OK if all(r[-1] for r in results) else EXIT_INVARIANT


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellspan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config_pos", nargs="?", metavar="CONFIG", help="config file (default: bundled demo)")
        p.add_argument("--config", help="config file; same as the positional argument")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
        p.add_argument("--verification-mode", action="store_true", help="use the unregularized source")

    p = sub.add_parser("run", help="time integration, writes fields.csv and diagnostics.csv")
    common(p)
    p.add_argument("--tau-continuation", action="store_true", help="repeat over tau0 * 2^-k")

    p = sub.add_parser("lifespan", help="evaluate the lifespan estimate, writes lifespan.txt")
    common(p)

    p = sub.add_parser("verify", help="manufactured solutions, equilibrium and uniqueness checks")
    common(p)
    p.add_argument("--case", action="append", choices=["mms-space", "mms-time", "mms-constant", "equilibrium", "uniqueness", "all"],
                   help="repeatable; default all")

    p = sub.add_parser("sweep", help="vary one parameter, writes sweep.csv")
    common(p)
    p.add_argument("--axis", required=True, choices=APRIORI_AXES + RUN_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CELLSPAN_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for line in exc.errors:
            log.error("%s", line)
        return EXIT_SOLVER
    out = _outdir(args, cfg)

    if args.command == "run":
        return cmd_run(cfg, out, args.tau_continuation)
    if args.command == "lifespan":
        return cmd_lifespan(cfg, out)
    if args.command == "verify":
        cases = args.case or ["all"]
        if "all" in cases:
            cases = ["mms-constant", "mms-space", "mms-time", "equilibrium", "uniqueness"]
        return cmd_verify(cfg, out, cases)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    return cmd_sweep(cfg, out, args.axis, values, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
