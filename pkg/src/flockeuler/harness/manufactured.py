"""Reference strong solutions for the inviscid system.

``manufactured`` references are closed-form (r, U); the sources that make
them exact solutions are derived with sympy for the local terms and applied
spectrally (exactly, for cosine-series kernels) for the convolutions.
``highres_run`` references are stored fine-grid trajectories of the
inviscid system, interpolated in time with cubic splines.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
import sympy as sp
from scipy.interpolate import CubicSpline

from ..dynamics import FluidState, IntegratorConfig, run
from ..fields import TorusGrid
from ..interaction import ConvolutionEngine
from ..model import ConfigurationError, ModelSpec

PRESETS = ("rest", "uniform-flow", "gaussian-bump-flock")


def preset_expressions(name: str, dim: int):
    """Sympy (t, xs, r, U) for a named preset."""
    t = sp.Symbol("t", real=True)
    xs = sp.symbols(f"x1:{dim + 1}", real=True)
    pi = sp.pi
    if name == "rest":
        return t, xs, sp.Integer(1), [sp.Integer(0)] * dim
    if name == "uniform-flow":
        return t, xs, sp.Integer(1), [sp.Rational(3, 10)] + [sp.Integer(0)] * (dim - 1)
    if name == "gaussian-bump-flock":
        if dim != 2:
            raise ConfigurationError("preset 'gaussian-bump-flock' is two-dimensional")
        x1, x2 = xs
        decay = sp.exp(-t)
        r = 1 + sp.Rational(1, 5) * sp.cos(pi * x1) * sp.cos(pi * x2) * decay
        U = [sp.Rational(1, 10) * sp.sin(pi * x2) * decay, sp.Rational(1, 10) * sp.sin(pi * x1) * decay]
        return t, xs, r, U
    raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def _local_sources(name: str, dim: int, model: ModelSpec):
    """Sympy expressions for the local part of (f_rho, f_m)."""
    t, xs, r, U = preset_expressions(name, dim)
    law, fr = model.pressure, model.friction
    gamma = sp.nsimplify(law.gamma)
    f_rho = sp.diff(r, t) + sum(sp.diff(r * U[j], xs[j]) for j in range(dim))
    speed2 = sum(u * u for u in U)
    f_m = []
    for i in range(dim):
        e = sp.diff(r * U[i], t)
        e += sum(sp.diff(r * U[i] * U[j], xs[j]) for j in range(dim))
        e += sp.diff(law.kappa * r**gamma, xs[i])
        if fr.active:
            e -= (1 - fr.h_inf * speed2 / (1 + speed2)) * r * U[i]
        f_m.append(e)
    return t, xs, r, U, f_rho, f_m


@lru_cache(maxsize=32)
def _compiled(name: str, dim: int, pressure, friction):
    t, xs, r, U, f_rho, f_m = _local_sources(name, dim, ModelSpec(pressure=pressure, friction=friction))
    args = (t,) + tuple(xs)
    lam = lambda e: sp.lambdify(args, e, "numpy")  # noqa: E731
    return lam(r), [lam(u) for u in U], lam(f_rho), [lam(e) for e in f_m]


def _broadcast(fn, t, coords):
    return np.broadcast_to(np.asarray(fn(t, *coords), dtype=float), coords.shape[1:]).copy()


@dataclass(frozen=True, eq=False)
class ManufacturedForcing:
    """Callable (t, grid) -> (f_rho, f_m) that makes a preset an exact solution.

    Picklable: the compiled sympy functions are rebuilt on demand.
    """

    preset: str
    dim: int
    model: ModelSpec

    def _fns(self):
        return _compiled(self.preset, self.dim, self.model.pressure, self.model.friction)

    def reference_fields(self, t: float, grid: TorusGrid):
        r_fn, u_fns, _, _ = self._fns()
        c = grid.coords
        return _broadcast(r_fn, t, c), np.array([_broadcast(f, t, c) for f in u_fns])

    def __call__(self, t: float, grid: TorusGrid):
        _, _, fr_fn, fm_fns = self._fns()
        c = grid.coords
        f_rho = _broadcast(fr_fn, t, c)
        f_m = np.array([_broadcast(f, t, c) for f in fm_fns])
        k, psi = self.model.attraction, self.model.alignment
        if not (k.is_zero and psi.is_zero):
            r, U = self.reference_fields(t, grid)
            rU = r * U
            if not k.is_zero:
                f_m += r * _conv_engine(k, grid).grad_convolve(r)
            if not psi.is_zero:
                eng = _conv_engine(psi, grid)
                cr = eng.convolve(r)
                f_m += rU * cr - r * np.array([eng.convolve(c_) for c_ in rU])
        return f_rho, f_m


@lru_cache(maxsize=32)
def _conv_engine(spec, grid):
    return ConvolutionEngine.from_spec(spec, grid)


@dataclass(eq=False)
class ReferenceSolution:
    kind: str
    preset: str
    model: ModelSpec  # inviscid model including the forcing
    r_min: float
    forcing: Optional[ManufacturedForcing] = None
    # highres_run data
    grid: Optional[TorusGrid] = None
    times: Optional[np.ndarray] = None
    _spline: Optional[CubicSpline] = field(default=None, repr=False)

    def fields(self, t: float, grid: TorusGrid):
        """(r, U) at time t sampled on ``grid``."""
        if self.kind == "manufactured":
            return self.forcing.reference_fields(t, grid)
        vals = self._spline(t)
        rho, m = vals[0], vals[1:]
        rho, m = self.grid.restrict(rho, grid), self.grid.restrict(m, grid)
        return rho, m / rho

    def state(self, t: float, grid: TorusGrid) -> FluidState:
        r, U = self.fields(t, grid)
        return FluidState(grid, t, r, r * U)


def build_manufactured(preset: str, grid: TorusGrid, model: ModelSpec, r_min: float = 0.5,
                       time_horizon: float = 1.0) -> ReferenceSolution:
    """Closed-form reference with its exact sources; the returned model is inviscid and forced."""
    base = replace(model, epsilon=0.0, density_reg=0.0, forcing=None)
    forcing = ManufacturedForcing(preset, grid.dim, base)
    for t in np.linspace(0.0, time_horizon, 11):
        r, _ = forcing.reference_fields(float(t), grid)
        if r.min() < r_min:
            raise ConfigurationError(f"preset {preset!r} violates r >= {r_min} at t={t:.3g}")
    return ReferenceSolution("manufactured", preset, replace(base, forcing=forcing), r_min, forcing)


def build_highres(preset: str, grid: TorusGrid, model: ModelSpec, refine: int = 2,
                  cfg: Optional[IntegratorConfig] = None, r_min: float = 0.5) -> ReferenceSolution:
    """Run the forced inviscid system on a grid ``refine`` times finer and store it."""
    fine = TorusGrid(grid.dim, grid.m * refine)
    cfg = cfg or IntegratorConfig()
    man = build_manufactured(preset, fine, model, r_min, cfg.t_end)
    traj = run(man.state(0.0, fine), man.model, replace(cfg, keep_states=True, track_budget=False))
    times = traj.times
    data = np.array([np.concatenate([s.state.rho[None], s.state.momentum]) for s in traj.samples])
    spline = CubicSpline(times, data, axis=0)
    return ReferenceSolution("highres_run", preset, man.model, r_min, man.forcing, fine, times, spline)


def manufactured_residual(ref: ReferenceSolution, grid: TorusGrid, t: float) -> float:
    """Max-norm of d/dt(r, rU) - RHS(r, rU) with the time derivative from sympy."""
    from ..dynamics import Assembler

    if ref.kind != "manufactured":
        raise ValueError("residual is defined for manufactured references")
    t_sym, xs, r, U = preset_expressions(ref.preset, grid.dim)
    args = (t_sym,) + tuple(xs)
    dr = sp.lambdify(args, sp.diff(r, t_sym), "numpy")
    dm = [sp.lambdify(args, sp.diff(r * u, t_sym), "numpy") for u in U]
    c = grid.coords
    exact_rho = _broadcast(dr, t, c)
    exact_m = np.array([_broadcast(f, t, c) for f in dm])
    tend = Assembler(grid, ref.model).tendency(ref.state(t, grid))
    return float(max(np.abs(tend.d_rho - exact_rho).max(), np.abs(tend.d_momentum - exact_m).max()))
