"""Right-hand side of the (viscous) flocking Euler system and its time integration.

Prognostic variables are density and momentum.  With ``density_reg = 1/n``
the continuity equation carries the artificial diffusion (1/n) Lap rho and the
momentum equation the matching term (1/n) div(u (x) grad rho), which keeps the
kinetic energy balance free of regularization terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import energetics
from .fields import TorusGrid
from .interaction import ConvolutionEngine
from .model import KernelSpec, ModelSpec, validate_model


class BlowUpError(RuntimeError):
    def __init__(self, term: str, time: float):
        super().__init__(f"non-finite value in term {term!r} at t={time:.6g}")
        self.term = term
        self.time = time
        self.trajectory = None


class StiffnessError(RuntimeError):
    trajectory = None


class InvalidRunError(RuntimeError):
    trajectory = None


class ModelValidationError(ValueError):
    def __init__(self, report):
        super().__init__("model hypotheses violated:\n" + report.format())
        self.report = report


@dataclass(frozen=True, eq=False)
class FluidState:
    grid: TorusGrid
    time: float
    rho: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        self.grid.check(self.rho)
        self.grid.check(self.momentum, rank=1)

    @classmethod
    def from_velocity(cls, grid: TorusGrid, rho, u, time: float = 0.0) -> "FluidState":
        rho = np.asarray(rho, dtype=float)
        return cls(grid, time, rho, rho * np.asarray(u, dtype=float))

    def velocity(self, floor: float = 0.0) -> np.ndarray:
        return self.momentum / np.maximum(self.rho, floor)

    def mass(self) -> float:
        return float(self.grid.integrate(self.rho))

    def total_momentum(self) -> np.ndarray:
        return np.asarray(self.grid.integrate(self.momentum))

    def shifted(self, shift: Sequence[int]) -> "FluidState":
        axes = tuple(range(self.grid.dim))
        return FluidState(self.grid, self.time, np.roll(self.rho, shift, axis=axes),
                          np.roll(self.momentum, shift, axis=tuple(a + 1 for a in axes)))


@dataclass(frozen=True)
class Tendency:
    d_rho: np.ndarray
    d_momentum: np.ndarray


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float = 1.0
    cfl: float = 0.4
    dt_max: float = 1e-2
    scheme: str = "ssp_rk3"
    # absolute floor; None means 1e-8 * mean initial density
    rho_floor: Optional[float] = None
    n_samples: int = 50
    dense: bool = False
    keep_states: bool = False
    track_budget: bool = True
    clip_tolerance: float = 1e-10

    def __post_init__(self):
        if self.scheme != "ssp_rk3":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.dt_max <= 0 or self.t_end < 0 or self.n_samples < 1:
            raise ValueError("dt_max > 0, t_end >= 0 and n_samples >= 1 required")


@lru_cache(maxsize=64)
def _engine(spec: KernelSpec, grid: TorusGrid) -> ConvolutionEngine:
    return ConvolutionEngine.from_spec(spec, grid)


@dataclass(eq=False)
class Evaluation:
    """Spectral tendency of one state plus the intermediates the energy budget reuses."""

    time: float
    rho: np.ndarray
    momentum: np.ndarray
    rho_safe: np.ndarray
    u: np.ndarray
    u_hat: np.ndarray
    rho_hat: np.ndarray
    terms_rho: dict
    terms_m: dict
    conv_k_rho: Optional[np.ndarray] = None
    grad_rho: Optional[np.ndarray] = None
    friction_factor: Optional[np.ndarray] = None
    forcing: Optional[tuple] = None

    @property
    def d_rho_hat(self):
        return sum(self.terms_rho.values())

    @property
    def d_m_hat(self):
        return sum(self.terms_m.values())


class Assembler:
    """Evaluates the semi-discrete right-hand side for a fixed grid and model."""

    def __init__(self, grid: TorusGrid, model: ModelSpec, rho_floor: float = 1e-12):
        self.grid = grid
        self.model = model
        self.rho_floor = rho_floor
        self.k_engine = _engine(model.attraction, grid)
        self.psi_engine = _engine(model.alignment, grid)

    def evaluate(self, state: FluidState) -> Evaluation:
        g, mdl = self.grid, self.model
        F, I, mask = g.forward, g.inverse, g.dealias_mask
        rho, m = state.rho, state.momentum
        rho_safe = np.maximum(rho, self.rho_floor)
        rho_hat = F(rho)
        m_hat = F(m)
        u_hat = mask * F(m / rho_safe)
        u = I(u_hat)

        ev = Evaluation(state.time, rho, m, rho_safe, u, u_hat, rho_hat, {}, {})
        tr, tm = ev.terms_rho, ev.terms_m

        tr["transport"] = -g.divergence_hat(m_hat)
        flux = np.array([[mask * F(m[i] * u[j]) for j in range(g.dim)] for i in range(g.dim)])
        tm["advection"] = -np.einsum("j...,ij...->i...", g.derivative_symbol, flux)
        tm["pressure"] = -g.gradient_hat(mask * F(mdl.pressure.p(rho_safe)))

        if mdl.epsilon:
            tm["viscosity"] = mdl.epsilon * g.laplacian_hat(u_hat)

        if mdl.friction.active:
            q = g.dealias(np.sum(u * u, axis=0))
            fac = g.dealias(1.0 - mdl.friction.H(np.maximum(q, 0.0)))
            ev.friction_factor = fac
            tm["friction"] = mask * F(fac * m)

        if not self.k_engine.is_zero:
            conv_hat = self.k_engine.convolve_hat(rho_hat)
            ev.conv_k_rho = I(conv_hat)
            grad_conv = I(g.gradient_hat(conv_hat))
            tm["attraction"] = -(mask * F(rho * grad_conv))

        if not self.psi_engine.is_zero:
            cr = I(self.psi_engine.convolve_hat(rho_hat))
            cm = I(self.psi_engine.convolve_hat(m_hat))
            tm["alignment"] = mask * F(rho * cm - m * cr)

        if mdl.density_reg:
            reg = mdl.density_reg
            tr["density_reg"] = reg * g.laplacian_hat(rho_hat)
            grad_rho = I(g.gradient_hat(rho_hat))
            ev.grad_rho = grad_rho
            cross = np.array([[mask * F(u[i] * grad_rho[j]) for j in range(g.dim)] for i in range(g.dim)])
            tm["reg_momentum"] = reg * np.einsum("j...,ij...->i...", g.derivative_symbol, cross)

        if mdl.forcing is not None:
            f_rho, f_m = mdl.forcing(state.time, g)
            ev.forcing = (f_rho, f_m)
            tr["forcing"] = mask * F(f_rho)
            tm["forcing"] = mask * F(f_m)

        self._check_finite(ev)
        return ev

    def _check_finite(self, ev: Evaluation):
        for name, term in list(ev.terms_rho.items()) + list(ev.terms_m.items()):
            if not np.all(np.isfinite(term)):
                raise BlowUpError(name, ev.time)

    def tendency(self, state: FluidState) -> Tendency:
        ev = self.evaluate(state)
        return Tendency(self.grid.inverse(ev.d_rho_hat), self.grid.inverse(ev.d_m_hat))

    def max_wave_speed(self, state: FluidState) -> float:
        rho = np.maximum(state.rho, self.rho_floor)
        speed = np.sqrt(np.sum(state.momentum**2, axis=0)) / rho + self.model.pressure.sound_speed(rho)
        return float(speed.max())

    def stable_dt(self, state: FluidState, cfg: IntegratorConfig) -> float:
        g, mdl = self.grid, self.model
        dt = cfg.dt_max
        speed = self.max_wave_speed(state)
        if speed > 0:
            dt = min(dt, cfg.cfl * g.spacing / speed)
        nu = max(mdl.epsilon / max(float(state.rho.min()), self.rho_floor), mdl.density_reg)
        if nu > 0:
            # 2.5 ~ extent of the SSP-RK3 stability region on the negative real axis
            lap_max = np.pi**2 * g.dim * g.max_retained_mode**2
            dt = min(dt, cfg.cfl * 2.5 / (nu * lap_max))
        return dt


def assemble_rhs(state: FluidState, model: ModelSpec, rho_floor: float = 1e-12) -> Tendency:
    return Assembler(state.grid, model, rho_floor).tendency(state)


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class StepInfo:
    dt: float
    clipped_mass: float
    integrals: Optional[np.ndarray] = None


def _axpy(grid, time, a, x: FluidState, b=None, y: Optional[FluidState] = None, c=0.0, t: Optional[Evaluation] = None):
    rho = a * x.rho
    m = a * x.momentum
    if y is not None:
        rho = rho + b * y.rho
        m = m + b * y.momentum
    if t is not None:
        rho = rho + c * grid.inverse(t.d_rho_hat)
        m = m + c * grid.inverse(t.d_m_hat)
    return FluidState(grid, time, rho, m)


def ssp_rk3_step(state: FluidState, dt: float, asm: Assembler, rates: Optional[Callable] = None):
    """One Shu-Osher SSP-RK3 step; ``rates(evaluation)`` is integrated with the same stages."""
    g, t = asm.grid, state.time
    e0 = asm.evaluate(state)
    s1 = _axpy(g, t + dt, 1.0, state, c=dt, t=e0)
    e1 = asm.evaluate(s1)
    s2 = _axpy(g, t + 0.5 * dt, 0.75, state, 0.25, s1, 0.25 * dt, e1)
    e2 = asm.evaluate(s2)
    s3 = _axpy(g, t + dt, 1.0 / 3.0, state, 2.0 / 3.0, s2, 2.0 / 3.0 * dt, e2)
    integrals = None
    if rates is not None:
        integrals = dt * (rates(e0) / 6.0 + rates(e1) / 6.0 + 2.0 * rates(e2) / 3.0)
    return s3, integrals


def _clip(state: FluidState, floor: float) -> tuple[FluidState, float]:
    low = state.rho < floor
    if not np.any(low):
        return state, 0.0
    clipped = float(state.grid.cell_volume * np.sum(floor - state.rho[low]))
    return replace(state, rho=np.maximum(state.rho, floor)), clipped


def step(state: FluidState, model: ModelSpec, cfg: IntegratorConfig,
         asm: Optional[Assembler] = None, dt: Optional[float] = None) -> FluidState:
    floor = cfg.rho_floor if cfg.rho_floor is not None else 1e-8 * float(state.rho.mean())
    asm = asm or Assembler(state.grid, model, floor)
    dt = asm.stable_dt(state, cfg) if dt is None else dt
    if dt < 1e-12:
        raise StiffnessError(f"time step {dt:.3e} below 1e-12 at t={state.time:.6g}")
    new, _ = ssp_rk3_step(state, dt, asm)
    new, _ = _clip(new, floor)
    return new


# ---------------------------------------------------------------------------
# run loop


@dataclass
class Sample:
    time: float
    step: int
    energy: "energetics.EnergySnapshot"
    integrals: np.ndarray  # cumulative, ordered as energetics.BUDGET_TERMS
    clipped_mass: float
    state: Optional[FluidState] = None


@dataclass
class Trajectory:
    initial: FluidState
    final: FluidState
    samples: list = field(default_factory=list)
    steps: int = 0
    clipped_mass: float = 0.0
    valid: bool = True
    rho_floor: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.samples])


def run(initial: FluidState, model: ModelSpec, cfg: IntegratorConfig,
        observers: Sequence[Callable] = (), validate: bool = True) -> Trajectory:
    """Advance ``initial`` to ``initial.time + cfg.t_end``.

    Observers are called with each :class:`Sample`: at the start, at every
    one of ``cfg.n_samples`` equally spaced times, and after every step when
    ``cfg.dense`` is set.
    """
    grid = initial.grid
    if validate:
        report = validate_model(model, grid)
        if not report.ok:
            raise ModelValidationError(report)
    floor = cfg.rho_floor if cfg.rho_floor is not None else 1e-8 * float(initial.rho.mean())
    asm = Assembler(grid, model, floor)
    rates = (lambda ev: energetics.budget_rates(ev, asm)) if cfg.track_budget else None
    mass0 = initial.mass()

    t0 = initial.time
    targets = [t0 + cfg.t_end * k / cfg.n_samples for k in range(1, cfg.n_samples + 1)]
    traj = Trajectory(initial, initial, rho_floor=floor)
    cumulative = np.zeros(len(energetics.BUDGET_TERMS))

    def emit(state, nstep):
        sample = Sample(state.time, nstep, energetics.energy_snapshot(state, model, asm.k_engine),
                        cumulative.copy(), traj.clipped_mass, state if cfg.keep_states else None)
        traj.samples.append(sample)
        for obs in observers:
            obs(sample)

    state = initial
    try:
        emit(state, 0)
        if cfg.t_end > 0:
            for target in targets:
                while state.time < target:
                    dt = asm.stable_dt(state, cfg)
                    if dt < 1e-12:
                        raise StiffnessError(f"time step {dt:.3e} below 1e-12 at t={state.time:.6g}")
                    landing = target - state.time <= dt * (1 + 1e-12)
                    if landing:
                        dt = target - state.time
                    new, integrals = ssp_rk3_step(state, dt, asm, rates)
                    if landing:
                        new = replace(new, time=target)
                    new, clipped = _clip(new, floor)
                    traj.clipped_mass += clipped
                    if integrals is not None:
                        cumulative += integrals
                    state = new
                    traj.steps += 1
                    traj.final = state
                    if cfg.dense and not landing:
                        emit(state, traj.steps)
                emit(state, traj.steps)
        traj.final = state
        if traj.clipped_mass > cfg.clip_tolerance * mass0:
            traj.valid = False
    except (BlowUpError, StiffnessError) as exc:
        exc.trajectory = traj
        raise
    finally:
        for obs in observers:
            close = getattr(obs, "close", None)
            if close is not None:
                close()
    return traj
