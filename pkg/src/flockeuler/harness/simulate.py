"""Single configured run: initial data, forcing, snapshots and the energy CSV."""
from __future__ import annotations

import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .. import energetics
from ..dynamics import Trajectory, run
from .config import RunConfig
from .manufactured import ReferenceSolution, build_manufactured
from .snapshot import persist_snapshot

BUDGET_REL_TOL = 1e-6


@dataclass
class RunResult:
    trajectory: Trajectory
    report: energetics.BudgetReport
    reference: ReferenceSolution
    directory: Optional[Path] = None


def reference_for(cfg: RunConfig) -> ReferenceSolution:
    return build_manufactured(cfg.preset, cfg.grid, cfg.model, time_horizon=cfg.integrator.t_end)


def configured_model(cfg: RunConfig, ref: ReferenceSolution):
    """The run's model: viscosity and regularization from the config, forcing if requested."""
    forcing = ref.forcing if cfg.forcing == "manufactured" else None
    return replace(cfg.model, forcing=forcing)


def snapshot_name(index: int) -> str:
    return f"snap_{index:04d}.bin"


def simulate(cfg: RunConfig, out_dir=None, config_path=None) -> RunResult:
    ref = reference_for(cfg)
    model = configured_model(cfg, ref)
    initial = ref.state(0.0, cfg.grid)
    keep = out_dir is not None and cfg.output.snapshots != "none"
    traj = run(initial, model, replace(cfg.integrator, keep_states=keep))
    report = energetics.audit_energy(traj.samples, rel_tol=BUDGET_REL_TOL)
    result = RunResult(traj, report, ref)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if config_path is not None:
            shutil.copyfile(config_path, out / "config.ini")
        energetics.write_energy_csv(traj.samples, report, out / "energy.csv")
        if keep:
            chosen = traj.samples if cfg.output.snapshots == "samples" else traj.samples[-1:]
            for i, s in enumerate(chosen):
                persist_snapshot(s.state, out / snapshot_name(i))
        result.directory = out
    return result
