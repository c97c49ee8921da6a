"""Vanishing-viscosity sweep against a reference strong solution.

Every viscous run starts from the reference data (or a perturbation of it),
carries the same manufactured sources as the reference, and records the
relative entropy, the clipped budget residual and the L1 density gap at each
sample time.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import energetics
from ..dynamics import BlowUpError, FluidState, IntegratorConfig, StiffnessError, run
from ..fields import TorusGrid
from ..youngmeasure import AtomicYoungMeasure, l1_density_gap, relative_entropy
from .gronwall import certificates_stable, gronwall_certificate
from .manufactured import ReferenceSolution

SWEEP_COLUMNS = ("epsilon", "sup_entropy", "sup_defect", "l1_gap", "gronwall_c")
SERIES_COLUMNS = ("time", "entropy", "defect", "l1_gap", "entropy_bound")
MONOTONE_TOL = 0.05
BUDGET_REL_TOL = 1e-6


class SweepAbortedError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass
class RunSeries:
    epsilon: float
    times: np.ndarray
    entropy: np.ndarray
    defect: np.ndarray
    l1_gap: np.ndarray
    entropy_bound: np.ndarray
    audit_passed: bool
    min_budget_margin: float
    energy_scale: float
    steps: int
    valid: bool = True
    error: Optional[str] = None


@dataclass
class SweepResult:
    epsilons: list
    sup_entropy: list
    sup_defect: list
    l1_gaps: list
    fitted_rate: float
    gronwall_c: list
    certificates: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def energy_scale(self) -> float:
        return self.runs[0].energy_scale if self.runs else float("nan")

    @property
    def certificates_stable(self) -> bool:
        return certificates_stable(self.certificates)

    @property
    def audits_passed(self) -> bool:
        return all(r.audit_passed for r in self.runs)

    def entropy_monotone(self, tol: float = MONOTONE_TOL) -> bool:
        return nonincreasing(self.sup_entropy, tol)

    def defect_monotone(self, tol: float = MONOTONE_TOL, floor: float = 0.0) -> bool:
        return nonincreasing(self.sup_defect, tol, floor)


def nonincreasing(values: Sequence[float], tol: float = MONOTONE_TOL, floor: float = 0.0) -> bool:
    """v[i+1] <= (1 + tol) v[i] + floor along the sequence."""
    v = list(values)
    return all(b <= (1.0 + tol) * a + floor for a, b in zip(v, v[1:]))


def loglog_slope(eps: Sequence[float], values: Sequence[float]) -> float:
    e, v = np.asarray(eps, float), np.asarray(values, float)
    keep = (e > 0) & (v > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(e[keep]), np.log(v[keep]), 1)[0])


def initial_state(ref: ReferenceSolution, grid: TorusGrid, mode: str = "matched", delta: float = 0.0) -> FluidState:
    state = ref.state(0.0, grid)
    if mode == "matched" or delta == 0.0:
        return state
    # density bump at fixed velocity; total mass unchanged
    u = state.velocity()
    rho = state.rho + delta * grid.trig_field((1,) + (0,) * (grid.dim - 1))
    return FluidState.from_velocity(grid, rho, u, state.time)


def run_one(ref: ReferenceSolution, epsilon: float, grid: TorusGrid, integrator: IntegratorConfig,
            mode: str = "matched", delta: float = 0.0, density_reg: float = 0.0,
            out_dir=None) -> RunSeries:
    model = replace(ref.model, epsilon=epsilon, density_reg=density_reg)
    law = model.pressure
    initial = initial_state(ref, grid, mode, delta)
    rows = []

    def observe(sample):
        r, U = ref.fields(sample.time, grid)
        nu = AtomicYoungMeasure.from_state(sample.state)
        gap, bound = l1_density_gap(nu, r, law)
        rows.append((sample.time, relative_entropy(nu, r, U, law), gap, bound))
        sample.state = None  # keep memory flat across long sweeps

    cfg = replace(integrator, keep_states=True, dense=False)
    try:
        traj = run(initial, model, cfg, observers=[observe])
    except (BlowUpError, StiffnessError) as exc:
        nan = np.array([np.nan])
        return RunSeries(epsilon, nan, nan, nan, nan, nan, False, float("nan"), float("nan"), 0, False, str(exc))
    report = energetics.audit_energy(traj.samples, rel_tol=BUDGET_REL_TOL)
    data = np.array(rows)
    series = RunSeries(
        epsilon, data[:, 0], data[:, 1], report.dissipation_defect, data[:, 2], data[:, 3],
        report.passed, report.min_margin, traj.samples[0].energy.scale, traj.steps, traj.valid,
        None if traj.valid else "density clipping exceeded tolerance",
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        energetics.write_energy_csv(traj.samples, report, out / "energy.csv")
        _write_rows(out / "series.csv", SERIES_COLUMNS,
                    zip(series.times, series.entropy, series.defect, series.l1_gap, series.entropy_bound))
    return series


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


def _task(args):
    return run_one(*args)


def _summarize(runs: list) -> SweepResult:
    certs = [gronwall_certificate(r.entropy, r.defect, r.epsilon, r.times,
                                  initial_mismatch=float(r.entropy[0] + r.defect[0])) for r in runs]
    sup_e = [float(np.max(r.entropy)) for r in runs]
    return SweepResult(
        epsilons=[r.epsilon for r in runs],
        sup_entropy=sup_e,
        sup_defect=[float(np.max(r.defect)) for r in runs],
        l1_gaps=[float(np.max(r.l1_gap)) for r in runs],
        fitted_rate=loglog_slope([r.epsilon for r in runs], sup_e),
        gronwall_c=[c.c_fit for c in certs],
        certificates=certs,
        runs=runs,
    )


def write_sweep_csv(result: SweepResult, path) -> None:
    _write_rows(path, SWEEP_COLUMNS, zip(result.epsilons, result.sup_entropy, result.sup_defect,
                                         result.l1_gaps, result.gronwall_c))


def run_sweep(ref: ReferenceSolution, epsilons: Sequence[float], grid: TorusGrid,
              integrator: IntegratorConfig, mode: str = "matched", delta: float = 0.0,
              density_reg: float = 0.0, workers: int = 1, out_dir=None) -> SweepResult:
    """Run one viscous simulation per epsilon; results are ordered as ``epsilons``."""
    eps = [float(e) for e in epsilons]
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    out = Path(out_dir) if out_dir is not None else None
    tasks = [(ref, e, grid, integrator, mode, delta, density_reg,
              None if out is None else out / f"eps_{i:02d}") for i, e in enumerate(eps)]
    if workers > 1 and len(tasks) > 1 and ref.kind == "manufactured":
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            runs = list(pool.map(_task, tasks))
    else:
        runs = [_task(t) for t in tasks]

    done = []
    for r in runs:
        if not r.valid:
            break
        done.append(r)
    result = _summarize(done) if done else SweepResult([], [], [], [], float("nan"), [])
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(result, out / "sweep.csv")
    if len(done) < len(runs):
        bad = runs[len(done)]
        raise SweepAbortedError(f"run at epsilon={bad.epsilon:g} invalid: {bad.error}", result)
    return result
