"""Energy functional, budget accounting and weak-identity audits.

The budget tracks, along a trajectory,

    E(t1) + visc + reg_diss + align  =  E(t0) + friction + reg_cross + forcing - defect

where every right-hand entry is a time integral accumulated with the same
SSP-RK3 stages that advance the state.  The defect is whatever is left over;
a negative defect means the discrete solution produced energy.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .interaction import ConvolutionEngine, alignment_dissipation

BUDGET_TERMS = ("visc_diss", "reg_diss", "friction_prod", "align_diss", "reg_cross", "forcing_work")
_PRODUCTION = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 1.0])
_DISSIPATION = np.array([1.0, 1.0, 0.0, 1.0, 0.0, 0.0])

ENERGY_COLUMNS = ("time", "kinetic", "internal", "interaction", "total", "visc_diss", "reg_diss",
                  "friction_prod", "align_diss", "defect", "reg_cross", "forcing_work")


class AuditInconclusiveError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergySnapshot:
    time: float
    kinetic: float
    internal: float
    interaction: float
    # int P(rho) - P'(1)(rho - 1): nonnegative form of the internal energy
    internal_shifted: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.internal + self.interaction

    @property
    def scale(self) -> float:
        """Positive magnitude used to make budget tolerances relative."""
        return self.kinetic + self.internal_shifted + abs(self.interaction)


def energy_snapshot(state, model, k_engine: Optional[ConvolutionEngine] = None) -> EnergySnapshot:
    grid = state.grid
    law = model.pressure
    rho = state.rho
    safe = np.maximum(rho, 1e-300)
    kinetic = 0.5 * grid.integrate(np.sum(state.momentum**2, axis=0) / safe)
    internal = grid.integrate(law.potential(np.maximum(rho, 0.0)))
    shifted = internal - law.dpotential(1.0) * grid.integrate(rho - 1.0)
    if k_engine is None:
        k_engine = ConvolutionEngine.from_spec(model.attraction, grid)
    interaction = 0.0 if k_engine.is_zero else 0.5 * grid.integrate(rho * k_engine.convolve(rho))
    return EnergySnapshot(state.time, float(kinetic), float(internal), float(interaction), float(shifted))


def budget_rates(ev, asm) -> np.ndarray:
    """Instantaneous rates of the budget terms, ordered as BUDGET_TERMS."""
    g, mdl = asm.grid, asm.model
    out = np.zeros(len(BUDGET_TERMS))
    u = ev.u
    if mdl.epsilon:
        grad_u = np.array([g.inverse(g.gradient_hat(uh)) for uh in ev.u_hat])
        out[0] = mdl.epsilon * g.integrate(np.sum(grad_u**2, axis=(0, 1)))
    if mdl.density_reg:
        out[1] = mdl.density_reg * g.integrate(
            mdl.pressure.d2potential(ev.rho_safe) * np.sum(ev.grad_rho**2, axis=0))
        if ev.conv_k_rho is not None:
            out[4] = mdl.density_reg * g.integrate(ev.rho * g.laplacian(ev.conv_k_rho))
    if ev.friction_factor is not None:
        out[2] = g.integrate(ev.friction_factor * np.sum(ev.momentum * u, axis=0))
    if not asm.psi_engine.is_zero:
        out[3] = alignment_dissipation(asm.psi_engine, ev.rho, u)
    if ev.forcing is not None:
        f_rho, f_m = ev.forcing
        chem = mdl.pressure.dpotential(ev.rho_safe) - 0.5 * np.sum(u * u, axis=0)
        if ev.conv_k_rho is not None:
            chem = chem + ev.conv_k_rho
        out[5] = g.integrate(np.sum(f_m * u, axis=0) + f_rho * chem)
    return out


@dataclass
class EnergyBudget:
    window: tuple
    energy_start: EnergySnapshot
    energy_end: EnergySnapshot
    viscous_dissipation: float
    density_reg_dissipation: float
    friction_production: float
    alignment_dissipation: float
    reg_crossterm: float
    forcing_work: float

    @property
    def defect(self) -> float:
        return ((self.energy_start.total + self.friction_production + self.reg_crossterm + self.forcing_work)
                - (self.energy_end.total + self.viscous_dissipation + self.density_reg_dissipation
                   + self.alignment_dissipation))


@dataclass
class BudgetReport:
    windows: list
    times: np.ndarray
    cumulative_defect: np.ndarray
    tolerance: np.ndarray
    passed: bool

    @property
    def dissipation_defect(self) -> np.ndarray:
        """max(0, cumulative residual): the measured stand-in for the dissipation defect."""
        return np.maximum(self.cumulative_defect, 0.0)

    @property
    def min_margin(self) -> float:
        # the t0 window is zero by construction
        margin = self.cumulative_defect + self.tolerance
        return float(np.min(margin[1:] if margin.size > 1 else margin))


def _trapezoid_integrals(times, rates):
    steps = np.diff(times)[:, None] * 0.5 * (rates[1:] + rates[:-1])
    return np.vstack([np.zeros(rates.shape[1]), np.cumsum(steps, axis=0)])


def audit_energy(samples: Sequence, model=None, rel_tol: float = 1e-6,
                 rates: Optional[np.ndarray] = None) -> BudgetReport:
    """Budget audit over consecutive samples.

    Samples carry cumulative budget integrals accumulated in-step.  If
    ``rates`` (one row per sample) is given instead, the integrals come from
    the trapezoidal rule, and the audit refuses to conclude when halving the
    sampling changes them by more than the tolerance.

    Tolerance: ``rel_tol * energy scale at t0`` per unit elapsed time.
    """
    if len(samples) < 2:
        raise AuditInconclusiveError("need at least two samples")
    times = np.array([s.time for s in samples])
    energies = [s.energy for s in samples]
    if rates is not None:
        rates = np.asarray(rates)
        integrals = _trapezoid_integrals(times, rates)
        if len(samples) >= 5:
            coarse = _trapezoid_integrals(times[::2], rates[::2])
            err = np.abs(coarse[-1] - integrals[::2][-1]).sum() / 3.0
            scale = energies[0].scale
            if err > rel_tol * scale * max(times[-1] - times[0], 1e-300):
                raise AuditInconclusiveError(
                    f"sampling too coarse: quadrature error estimate {err:.3e} exceeds tolerance")
    else:
        integrals = np.array([s.integrals for s in samples])

    scale = energies[0].scale
    windows = []
    for a in range(len(samples) - 1):
        d = integrals[a + 1] - integrals[a]
        windows.append(EnergyBudget((times[a], times[a + 1]), energies[a], energies[a + 1], *d))
    e0 = energies[0].total
    cumulative = np.array([
        e0 + integrals[i] @ _PRODUCTION - energies[i].total - integrals[i] @ _DISSIPATION
        for i in range(len(samples))
    ])
    tol = rel_tol * scale * (times - times[0])
    passed = bool(np.all(cumulative >= -tol))
    return BudgetReport(windows, times, cumulative, tol, passed)


def write_energy_csv(samples: Sequence, report: BudgetReport, path_or_buffer) -> None:
    rows = []
    for s, d in zip(samples, report.cumulative_defect):
        e = s.energy
        ints = dict(zip(BUDGET_TERMS, s.integrals))
        rows.append([s.time, e.kinetic, e.internal, e.interaction, e.total, ints["visc_diss"],
                     ints["reg_diss"], ints["friction_prod"], ints["align_diss"], d,
                     ints["reg_cross"], ints["forcing_work"]])
    _write_csv(path_or_buffer, ENERGY_COLUMNS, rows)


def _write_csv(path_or_buffer, header, rows, labels=None):
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(rows):
            prefix = list(labels[i]) if labels is not None else []
            w.writerow(prefix + [format(float(v), ".17g") for v in row])
    finally:
        if own:
            fh.close()


def read_energy_csv(path) -> dict:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    return {name: data[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# weak identities


@dataclass(frozen=True)
class TrigTestFunction:
    """phi(t, x) = cos(omega t) * trig(pi k.x), optionally times the unit vector e_component."""

    name: str
    wavevector: tuple
    kind: str = "cos"
    omega: float = 0.0
    component: Optional[int] = None

    def time_factor(self, t):
        return np.cos(self.omega * t), -self.omega * np.sin(self.omega * t)

    def spatial(self, grid):
        return grid.trig_field(self.wavevector, self.kind)


def default_test_functions(dim: int, t_end: float) -> list:
    zero = (0,) * dim
    k1 = (1,) + (0,) * (dim - 1)
    diag = (1,) * dim
    last = (0,) * (dim - 1) + (1,)
    omega = np.pi / t_end if t_end > 0 else 0.0
    return [
        TrigTestFunction("one", zero),
        TrigTestFunction("cos_x1_cos_t", k1, "cos", omega),
        TrigTestFunction("cos_diag_cos_t", diag, "cos", omega),
        TrigTestFunction("e1", zero, component=0),
        TrigTestFunction("cos_x1_cos_t_e1", k1, "cos", omega, component=0),
        TrigTestFunction("sin_xN_cos_t_e1", last, "sin", omega, component=0),
    ]


@dataclass
class IdentityResidual:
    name: str
    equation: str
    residual: float
    scale: float


@dataclass
class IdentityReport:
    residuals: list = field(default_factory=list)

    def max_residual(self, equation: Optional[str] = None) -> float:
        vals = [abs(r.residual) for r in self.residuals if equation in (None, r.equation)]
        return max(vals) if vals else 0.0

    def write_csv(self, path_or_buffer):
        rows = [[r.residual, r.scale] for r in self.residuals]
        names = [[r.name, r.equation] for r in self.residuals]
        _write_csv(path_or_buffer, ("test_function", "equation", "residual", "scale"), rows, names)


def audit_weak_identities(states: Sequence, model, test_functions: Optional[Sequence] = None,
                          rho_floor: float = 1e-12) -> IdentityReport:
    """Residuals of the weak continuity and momentum identities over a sampled trajectory.

    ``states`` are FluidStates at increasing times; time integrals use the
    trapezoidal rule, so the residual carries an O(dt^2) quadrature error on
    top of the discretization error.  The concentration-measure term is zero.
    """
    from .dynamics import Assembler

    if len(states) < 2:
        raise AuditInconclusiveError("need at least two states")
    grid = states[0].grid
    asm = Assembler(grid, model, rho_floor)
    times = np.array([s.time for s in states])
    t_end = times[-1] - times[0]
    tests = list(test_functions) if test_functions is not None else default_test_functions(grid.dim, t_end)

    evs = [asm.evaluate(s) for s in states]
    # the non-divergence momentum forces, already dealiased
    source_names = ("friction", "attraction", "alignment", "forcing")
    report = IdentityReport()
    for tf in tests:
        g_x = tf.spatial(grid)
        grad_g = grid.gradient(g_x)
        integrand = []
        for s, ev in zip(states, evs):
            a, da = tf.time_factor(s.time - times[0])
            rho, m, u = ev.rho, ev.momentum, ev.u
            if tf.component is None:
                val = -grid.integrate(rho * da * g_x) - grid.integrate(np.sum(m * grad_g, axis=0) * a)
                if model.density_reg:
                    val += model.density_reg * a * grid.integrate(np.sum(ev.grad_rho * grad_g, axis=0))
                if ev.forcing is not None:
                    val -= a * grid.integrate(grid.dealias(ev.forcing[0]) * g_x)
            else:
                c = tf.component
                flux_c = grid.dealias(m[c] * u)  # row c of m (x) u
                p = grid.dealias(model.pressure.p(ev.rho_safe))
                val = -grid.integrate(m[c] * da * g_x)
                val -= a * grid.integrate(np.sum(flux_c * grad_g, axis=0))
                val -= a * grid.integrate(p * grad_g[c])
                if model.epsilon:
                    grad_uc = grid.gradient(u[c])
                    val += model.epsilon * a * grid.integrate(np.sum(grad_uc * grad_g, axis=0))
                if model.density_reg:
                    val += model.density_reg * a * grid.integrate(
                        np.sum(grid.dealias(u[c] * ev.grad_rho) * grad_g, axis=0))
                force = sum((ev.terms_m[n][c] for n in source_names if n in ev.terms_m),
                            np.zeros(grid.spectral_shape, complex))
                val -= a * grid.integrate(grid.inverse(force) * g_x)
            integrand.append(val)
        integrand = np.array(integrand)
        time_int = float(np.sum(np.diff(times) * 0.5 * (integrand[1:] + integrand[:-1])))
        a0, _ = tf.time_factor(0.0)
        a1, _ = tf.time_factor(t_end)
        if tf.component is None:
            q0 = grid.integrate(states[0].rho * g_x) * a0
            q1 = grid.integrate(states[-1].rho * g_x) * a1
            eq, scale = "continuity", abs(states[0].mass())
        else:
            c = tf.component
            q0 = grid.integrate(states[0].momentum[c] * g_x) * a0
            q1 = grid.integrate(states[-1].momentum[c] * g_x) * a1
            eq, scale = "momentum", float(grid.integrate(np.sqrt(np.sum(states[0].momentum**2, axis=0))))
        report.residuals.append(IdentityResidual(tf.name, eq, float(q1 - q0 + time_int), scale))
    return report
