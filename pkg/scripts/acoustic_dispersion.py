"""Small-amplitude standing waves at rest density rho0: measured frequency vs linear theory.

Linearizing about (rho0, 0) gives omega^2 = (pi k)^2 (p'(rho0) + rho0 Khat(k)),
where Khat is the convolution multiplier of the attraction kernel on mode k.
The frequency is read off the mode amplitude A(t) through the exact sampled
relation A(t + h) + A(t - h) = 2 cos(omega h) A(t).
"""
import argparse
import csv
import sys

import numpy as np

from flockeuler.dynamics import FluidState, IntegratorConfig, run
from flockeuler.fields import TorusGrid
from flockeuler.interaction import ConvolutionEngine
from flockeuler.model import FrictionLaw, KernelSpec, ModelSpec, PressureLaw


def measured_frequency(amplitudes: np.ndarray, h: float) -> float:
    mid = amplitudes[1:-1]
    cos_wh = np.dot(amplitudes[2:] + amplitudes[:-2], mid) / (2.0 * np.dot(mid, mid))
    return float(np.arccos(np.clip(cos_wh, -1.0, 1.0)) / h)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--modes", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--rho0", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=1.4)
    ap.add_argument("--attraction", type=float, default=0.5, help="cosine attraction amplitude (0 disables)")
    ap.add_argument("--amp", type=float, default=1e-6)
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--samples", type=int, default=80)
    ap.add_argument("--csv", help="write the table here")
    args = ap.parse_args(argv)

    g = TorusGrid(2, args.m)
    law = PressureLaw(1.0, args.gamma)
    k_spec = KernelSpec("cosine", args.attraction) if args.attraction else KernelSpec()
    model = ModelSpec(pressure=law, friction=FrictionLaw("off"), attraction=k_spec)
    mult = ConvolutionEngine.from_spec(k_spec, g).multiplier
    x = g.coords[0]
    rows = []
    for k in args.modes:
        shape = np.cos(np.pi * k * x)
        s0 = FluidState(g, 0.0, args.rho0 + args.amp * shape, np.zeros((2,) + g.shape))
        cfg = IntegratorConfig(t_end=args.t_end, n_samples=args.samples, keep_states=True, dt_max=2e-3)
        traj = run(s0, model, cfg)
        amps = np.array([g.integrate((s.state.rho - args.rho0) * shape) for s in traj.samples])
        h = args.t_end / args.samples
        omega2 = (np.pi * k) ** 2 * (law.dp(args.rho0) + args.rho0 * float(mult[k, 0]))
        if omega2 <= 0:
            print(f"k={k}: linearly unstable mode (omega^2={omega2:.3e}); skipped")
            continue
        theory = float(np.sqrt(omega2))
        got = measured_frequency(amps, h)
        rows.append((k, theory, got, abs(got - theory) / theory))
    print(f"{'k':>3} {'omega_theory':>14} {'omega_measured':>15} {'rel_err':>10}")
    for k, th, got, err in rows:
        print(f"{k:3d} {th:14.8f} {got:15.8f} {err:10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "omega_theory", "omega_measured", "rel_err"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
