"""Command line entry point.

Exit codes: 0 success, 1 ym-check property failure, 2 configuration error,
3 blow-up or invalid run, 4 audit failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import energetics
from ..dynamics import Assembler, BlowUpError, InvalidRunError, ModelValidationError, StiffnessError
from ..model import ConfigurationError, validate_model
from ..youngmeasure import AtomicYoungMeasure, random_atoms, relative_entropy, pairwise_alignment_identity
from .config import load_config
from .manufactured import build_highres
from .simulate import BUDGET_REL_TOL, configured_model, reference_for, simulate
from .snapshot import SnapshotError, load_snapshot
from .sweep import SweepAbortedError, run_sweep

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_RUN, EXIT_AUDIT = 0, 1, 2, 3, 4


def _err(msg):
    print(msg, file=sys.stderr)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_model(cfg.model, cfg.grid)
    print(report.format())
    if cfg.forcing == "manufactured":
        reference_for(cfg)  # raises on an unknown preset or r_min violation
    return EXIT_OK if report.ok else EXIT_CONFIG


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output.directory)
    result = simulate(cfg, out, config_path=args.config)
    traj, report = result.trajectory, result.report
    print(f"steps={traj.steps} t={traj.final.time:.6g} mass_drift={traj.final.mass() - traj.initial.mass():.3e} "
          f"min_budget_margin={report.min_margin:.3e}")
    if not traj.valid:
        _err(f"run invalid: clipped mass {traj.clipped_mass:.3e}")
        return EXIT_RUN
    if not report.passed:
        _err("energy audit failed: budget residual below -tol")
        return EXIT_AUDIT
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sw = cfg.sweep
    out = Path(args.out or cfg.output.directory)
    integ = cfg.integrator
    if sw.reference == "highres_run":
        ref = build_highres(cfg.preset, cfg.grid, cfg.model, cfg=integ)
    else:
        ref = reference_for(cfg)
    workers = args.workers or sw.workers
    try:
        res = run_sweep(ref, sw.epsilons, cfg.grid, integ, sw.mode, sw.delta, cfg.model.density_reg,
                        workers, out)
    except SweepAbortedError as exc:
        _err(f"sweep aborted: {exc}")
        return EXIT_RUN
    for e, se, sd, gap, c in zip(res.epsilons, res.sup_entropy, res.sup_defect, res.l1_gaps, res.gronwall_c):
        print(f"eps={e:.3g} sup_E={se:.4e} sup_D={sd:.3e} l1_gap={gap:.4e} c_fit={c:.3f}")
    print(f"fitted log-log slope of sup_E vs eps: {res.fitted_rate:.3f} (empirical, no reference rate)")
    if not res.audits_passed:
        _err("energy audit failed for at least one run")
        return EXIT_AUDIT
    return EXIT_OK


def cmd_audit(args) -> int:
    run_dir = Path(args.run_dir)
    cfg_path = run_dir / "config.ini"
    if not cfg_path.exists():
        raise ConfigurationError(f"{cfg_path} not found; audit needs the run's config copy")
    cfg = load_config(cfg_path)
    model = configured_model(cfg, reference_for(cfg))
    snaps = sorted(run_dir.glob("snap_*.bin"))
    if len(snaps) < 2:
        _err("need at least two snapshots to audit")
        return EXIT_AUDIT
    states = [load_snapshot(p, expect_grid=cfg.grid) for p in snaps]
    ok = True

    energy_csv = run_dir / "energy.csv"
    if energy_csv.exists():
        cols = energetics.read_energy_csv(energy_csv)
        tol = BUDGET_REL_TOL * _scale(states[0], model) * (cols["time"] - cols["time"][0])
        worst = float(np.min((cols["defect"] + tol)[1:]))
        print(f"energy budget (stored integrals): min margin {worst:.3e}")
        ok &= worst >= 0
    # independent check from snapshots alone: trapezoid integrals of the budget rates
    asm = Assembler(cfg.grid, model, 1e-8 * float(states[0].rho.mean()))
    rates = np.array([energetics.budget_rates(asm.evaluate(s), asm) for s in states])
    samples = [_SnapSample(s.time, energetics.energy_snapshot(s, model, asm.k_engine)) for s in states]
    try:
        rep = energetics.audit_energy(samples, rel_tol=BUDGET_REL_TOL, rates=rates)
        print(f"energy budget (snapshot quadrature): passed={rep.passed} min margin {rep.min_margin:.3e}")
        ok &= rep.passed
    except energetics.AuditInconclusiveError as exc:
        print(f"energy budget (snapshot quadrature): inconclusive ({exc})")

    ident = energetics.audit_weak_identities(states, model)
    for r in ident.residuals:
        print(f"weak identity {r.equation:10s} {r.name:18s} residual={r.residual: .3e} scale={r.scale:.3e}")
    ident.write_csv(str(run_dir / "identities.csv"))
    mass_res = [r for r in ident.residuals if r.name == "one"]
    if mass_res and abs(mass_res[0].residual) > 1e-11 * max(mass_res[0].scale, 1.0):
        _err("mass identity residual above 1e-11")
        ok = False
    return EXIT_OK if ok else EXIT_AUDIT


class _SnapSample:
    def __init__(self, time, energy):
        self.time = time
        self.energy = energy


def _scale(state, model):
    return energetics.energy_snapshot(state, model).scale


def cmd_ym_check(args) -> int:
    from ..fields import TorusGrid
    from ..model import PressureLaw

    rng = np.random.default_rng(args.seed)
    law = PressureLaw()
    failures = 0
    for _ in range(args.cases):
        dim = int(rng.integers(1, 4))
        ax = random_atoms(rng, int(rng.integers(1, 6)), dim)
        ay = random_atoms(rng, int(rng.integers(1, 6)), dim)
        lhs, rhs = pairwise_alignment_identity(ax, ay, float(rng.uniform(0, 2)))
        if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs)) or lhs < -1e-12 * max(1.0, abs(lhs)):
            failures += 1
    grid = TorusGrid(2, 8)
    for _ in range(max(1, args.cases // 10)):
        atoms = random_atoms(rng, int(rng.integers(1, 5)), 2)
        nu = AtomicYoungMeasure.uniform(grid, atoms)
        r = rng.uniform(0.5, 2.0, grid.shape)
        U = rng.normal(0, 1, (2,) + grid.shape)
        if relative_entropy(nu, r, U, law) < 0:
            failures += 1
        lift = AtomicYoungMeasure.lift(grid, r, U)
        if abs(relative_entropy(lift, r, U, law)) > 1e-13:
            failures += 1
    print(f"ym-check: {args.cases} cases, {failures} failures")
    return EXIT_OK if failures == 0 else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flockeuler", description="Nonlocal compressible Euler experiments")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check model hypotheses for a config")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    s = sub.add_parser("simulate", help="single run; writes snapshots and energy.csv")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: [output] directory)")
    s.set_defaults(func=cmd_simulate)
    w = sub.add_parser("sweep", help="vanishing-viscosity sweep; writes sweep.csv and per-run artifacts")
    w.add_argument("config")
    w.add_argument("--out")
    w.add_argument("--workers", type=int)
    w.set_defaults(func=cmd_sweep)
    a = sub.add_parser("audit", help="re-run the budget and weak-identity audits on a run directory")
    a.add_argument("run_dir")
    a.set_defaults(func=cmd_audit)
    y = sub.add_parser("ym-check", help="randomized Young-measure property battery")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--cases", type=int, default=1000)
    y.set_defaults(func=cmd_ym_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, SnapshotError, ModelValidationError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except (BlowUpError, StiffnessError, InvalidRunError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
