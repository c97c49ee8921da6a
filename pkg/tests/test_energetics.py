import io

import numpy as np
import pytest

from conftest import bump_state
from flockeuler import energetics as en
from flockeuler.dynamics import Assembler, FluidState, IntegratorConfig, run
from flockeuler.fields import TorusGrid
from flockeuler.model import FrictionLaw, KernelSpec, ModelSpec

NO_FRICTION = FrictionLaw("off")


def test_rest_snapshot_is_zero():
    g = TorusGrid(2, 16)
    s = FluidState(g, 0.0, np.ones(g.shape), np.zeros((2,) + g.shape))
    e = en.energy_snapshot(s, ModelSpec())
    assert (e.kinetic, e.internal, e.interaction, e.total) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("a", [0.5, -1.3])
def test_constant_density_interaction(a):
    # K = a prod (1 + cos)/2 has integral a * 4 / 4 = a, so 1/2 int 1 * (K * 1) = 2 a
    g = TorusGrid(2, 16)
    s = FluidState(g, 0.0, np.ones(g.shape), np.zeros((2,) + g.shape))
    e = en.energy_snapshot(s, ModelSpec(attraction=KernelSpec("cosine", a)))
    assert e.interaction == pytest.approx(2 * a, rel=1e-13)


def test_kinetic_scales_quadratically():
    g = TorusGrid(2, 16)
    s = bump_state(g)
    double = FluidState(g, 0.0, s.rho, 2 * s.momentum)
    assert en.energy_snapshot(double, ModelSpec()).kinetic == 4 * en.energy_snapshot(s, ModelSpec()).kinetic


def test_shifted_internal_nonnegative():
    g = TorusGrid(2, 16)
    s = bump_state(g, amp=0.6)
    e = en.energy_snapshot(s, ModelSpec())
    assert e.internal_shifted >= 0


def test_steady_state_budget_is_zero():
    g = TorusGrid(2, 16)
    s = FluidState(g, 0.0, np.ones(g.shape), np.zeros((2,) + g.shape))
    traj = run(s, ModelSpec(friction=NO_FRICTION, epsilon=0.1), IntegratorConfig(t_end=0.2, n_samples=4))
    rep = en.audit_energy(traj.samples)
    assert rep.passed
    assert np.abs(rep.cumulative_defect).max() < 1e-15
    assert all(np.all(s.integrals == 0) for s in traj.samples)


def viscous_run(dt_max, t_end=0.5, m=32):
    g = TorusGrid(2, m)
    model = ModelSpec(friction=NO_FRICTION, epsilon=0.02)
    cfg = IntegratorConfig(t_end=t_end, dt_max=dt_max, n_samples=10)
    return run(bump_state(g), model, cfg)


def test_pure_viscous_decay_balances():
    traj = viscous_run(0.002)
    rep = en.audit_energy(traj.samples)
    e0, e1 = traj.samples[0].energy.total, traj.samples[-1].energy.total
    visc = traj.samples[-1].integrals[0]
    assert visc > 0
    assert abs(e1 + visc - e0) <= 1e-6 * traj.samples[0].energy.scale * 0.5
    assert rep.passed


def test_defect_order_under_dt_halving():
    d = [abs(en.audit_energy(viscous_run(dt).samples).cumulative_defect[-1]) for dt in (0.01, 0.005)]
    assert np.log2(d[0] / d[1]) >= 2.0


def test_rates_signs(flock_model):
    g = TorusGrid(2, 32)
    model = ModelSpec(pressure=flock_model.pressure, friction=flock_model.friction,
                      attraction=flock_model.attraction, alignment=flock_model.alignment,
                      epsilon=0.01, density_reg=0.01)
    asm = Assembler(g, model)
    s = bump_state(g)
    ev = asm.evaluate(s)
    r = dict(zip(en.BUDGET_TERMS, en.budget_rates(ev, asm)))
    assert r["visc_diss"] > 0 and r["reg_diss"] > 0 and r["align_diss"] >= 0
    # friction factor <= 1 bounds production by int rho |u|^2
    assert r["friction_prod"] <= g.integrate(s.rho * np.sum(ev.u**2, axis=0)) + 1e-15
    off = Assembler(g, ModelSpec(friction=NO_FRICTION))
    assert en.budget_rates(off.evaluate(s), off)[2] == 0.0


def test_density_reg_budget_closes():
    g = TorusGrid(2, 32)
    model = ModelSpec(attraction=KernelSpec("cosine", 0.5), friction=NO_FRICTION, density_reg=0.01)
    traj = run(bump_state(g), model, IntegratorConfig(t_end=0.3, dt_max=0.005, n_samples=6))
    rep = en.audit_energy(traj.samples)
    assert rep.passed
    assert traj.samples[-1].integrals[4] != 0.0  # the K cross term is active
    assert np.abs(rep.cumulative_defect).max() < 1e-7


def test_energy_production_is_flagged():
    traj = viscous_run(0.005)
    # over-report viscous dissipation: the books now show energy appearing from nowhere
    for s in traj.samples:
        s.integrals = s.integrals.copy()
        s.integrals[0] *= 2.0
    assert not en.audit_energy(traj.samples).passed


def test_trapezoid_audit_inconclusive_when_coarse():
    traj = viscous_run(0.005)
    g = traj.initial.grid
    model = ModelSpec(friction=NO_FRICTION, epsilon=0.02)
    asm = Assembler(g, model)
    states = run(traj.initial, model, IntegratorConfig(t_end=0.5, dt_max=0.005, n_samples=4,
                                                         keep_states=True)).samples
    rates = np.array([en.budget_rates(asm.evaluate(s.state), asm) for s in states])
    with pytest.raises(en.AuditInconclusiveError):
        en.audit_energy(states, rel_tol=1e-12, rates=rates)


def test_energy_csv_round_trip(tmp_path):
    traj = viscous_run(0.01, t_end=0.1)
    rep = en.audit_energy(traj.samples)
    path = tmp_path / "energy.csv"
    en.write_energy_csv(traj.samples, rep, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("time,kinetic,internal,interaction,total,visc_diss,reg_diss,friction_prod,align_diss,defect")
    cols = en.read_energy_csv(path)
    assert np.array_equal(cols["defect"], rep.cumulative_defect)
    assert np.array_equal(cols["total"], [s.energy.total for s in traj.samples])


def weak_run(n_samples, m=32):
    g = TorusGrid(2, m)
    model = ModelSpec(friction=NO_FRICTION, attraction=KernelSpec("cosine", 0.5),
                      alignment=KernelSpec("cosine", 1.0), epsilon=0.01)
    cfg = IntegratorConfig(t_end=0.5, dt_max=0.5 / n_samples, n_samples=n_samples, keep_states=True)
    traj = run(bump_state(g), model, cfg)
    return en.audit_weak_identities([s.state for s in traj.samples], model)


def test_weak_identity_conservation_cases():
    rep = weak_run(10)
    res = {r.name: r for r in rep.residuals}
    assert abs(res["one"].residual) <= 1e-11 * res["one"].scale
    assert abs(res["e1"].residual) <= 1e-9 * max(res["e1"].scale, 1.0)


def test_weak_identity_refinement_order():
    coarse = {r.name: abs(r.residual) for r in weak_run(10).residuals}
    fine = {r.name: abs(r.residual) for r in weak_run(20).residuals}
    for name in ("cos_diag_cos_t", "sin_xN_cos_t_e1"):
        assert np.log2(coarse[name] / fine[name]) >= 1.8


def test_identity_csv():
    rep = weak_run(4)
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "test_function,equation,residual,scale"
    assert len(lines) == 1 + len(rep.residuals)
