"""Finitely supported Young measures and the functionals evaluated against them.

An :class:`AtomicYoungMeasure` stores K atoms per grid point as stacked
arrays: ``weights`` and ``s`` of shape ``(K,) + grid.shape`` and ``v`` of
shape ``(K, dim) + grid.shape``.  Points with fewer atoms pad with weight 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import TorusGrid
from .model import DomainError, PressureLaw, bregman

WEIGHT_TOL = 1e-12


class UnknownObservableError(KeyError):
    pass


@dataclass(frozen=True)
class Atom:
    weight: float
    s: float
    v: tuple

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"atom weight must be positive, got {self.weight}")
        if self.s < 0:
            raise ValueError(f"atom density must be nonnegative, got {self.s}")
        object.__setattr__(self, "v", tuple(float(c) for c in np.atleast_1d(self.v)))


def _check_probability(atoms: Sequence[Atom]):
    total = sum(a.weight for a in atoms)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"atom weights sum to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class AtomicYoungMeasure:
    grid: TorusGrid
    weights: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        k = self.weights.shape[0]
        shape = self.grid.shape
        if self.weights.shape != (k,) + shape or self.s.shape != (k,) + shape:
            raise ValueError("weights and s must have shape (K,) + grid.shape")
        if self.v.shape != (k, self.grid.dim) + shape:
            raise ValueError("v must have shape (K, dim) + grid.shape")
        if np.any(self.weights < 0) or np.any(self.s < 0):
            raise ValueError("weights and densities must be nonnegative")
        if np.abs(self.weights.sum(axis=0) - 1.0).max() > WEIGHT_TOL:
            raise ValueError("weights do not sum to 1 at every point")

    @classmethod
    def lift(cls, grid: TorusGrid, rho: np.ndarray, u: np.ndarray) -> "AtomicYoungMeasure":
        """Dirac measure at (rho(x), u(x)) at each point."""
        grid.check(rho)
        grid.check(u, rank=1)
        return cls(grid, np.ones((1,) + grid.shape), np.asarray(rho, float)[None].copy(),
                   np.asarray(u, float)[None].copy())

    @classmethod
    def from_state(cls, state) -> "AtomicYoungMeasure":
        return cls.lift(state.grid, state.rho, state.velocity(1e-300))

    @classmethod
    def uniform(cls, grid: TorusGrid, atoms: Sequence[Atom]) -> "AtomicYoungMeasure":
        """The same atom list at every point."""
        _check_probability(atoms)
        ones = np.ones(grid.shape)
        w = np.array([a.weight * ones for a in atoms])
        s = np.array([a.s * ones for a in atoms])
        v = np.array([[c * ones for c in a.v] for a in atoms])
        return cls(grid, w, s, v)

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[0]

    def atoms_at(self, index: tuple) -> list[Atom]:
        out = []
        for k in range(self.n_atoms):
            w = float(self.weights[(k,) + index])
            if w > 0:
                out.append(Atom(w, float(self.s[(k,) + index]), tuple(self.v[(k, slice(None)) + index])))
        return out

    def density(self) -> np.ndarray:
        """Barycentric density <nu, s>."""
        return np.sum(self.weights * self.s, axis=0)

    def velocity(self) -> np.ndarray:
        """Barycentric velocity <nu, v> (not momentum weighted)."""
        return np.sum(self.weights[:, None] * self.v, axis=0)


# ---------------------------------------------------------------------------
# observables: each maps (s, v, context) to per-atom values


def _norm2(a):
    return np.sum(a * a, axis=1)


def _require(ctx, name):
    if ctx.get(name) is None:
        raise ValueError(f"observable needs the reference field {name!r}")
    return ctx[name]


def _law(ctx):
    return ctx.get("law") or PressureLaw()


_OBSERVABLES = {
    "s": lambda s, v, c: s,
    "s*|v|^2": lambda s, v, c: s * _norm2(v),
    "P(s)": lambda s, v, c: _law(c).potential(s),
    "p(s)": lambda s, v, c: _law(c).p(s),
    "s*|v-U|^2": lambda s, v, c: s * _norm2(v - _require(c, "U")[None]),
    "bregman(s,r)": lambda s, v, c: bregman(s, _require(c, "r")[None], _law(c)),
    "|s-r|": lambda s, v, c: np.abs(s - _require(c, "r")[None]),
    "s*|s-r|": lambda s, v, c: s * np.abs(s - _require(c, "r")[None]),
}


def _observable(name: str):
    if name.startswith("s*v") and name[3:].isdigit():
        k = int(name[3:]) - 1
        return lambda s, v, c: s * v[:, k]
    if name.startswith("v") and name[1:].isdigit():
        k = int(name[1:]) - 1
        return lambda s, v, c: v[:, k]
    try:
        return _OBSERVABLES[name]
    except KeyError:
        raise UnknownObservableError(name) from None


OBSERVABLES = tuple(_OBSERVABLES) + ("s*v<k>", "v<k>")


def moment(nu: AtomicYoungMeasure, observable: str, r: Optional[np.ndarray] = None,
           U: Optional[np.ndarray] = None, law: Optional[PressureLaw] = None) -> np.ndarray:
    """Pointwise sum_k w_k F(s_k, v_k) for F named in OBSERVABLES (components 1-based)."""
    f = _observable(observable)
    vals = f(nu.s, nu.v, {"r": r, "U": U, "law": law})
    return np.sum(nu.weights * vals, axis=0)


def relative_entropy(nu: AtomicYoungMeasure, r: np.ndarray, U: np.ndarray, law: PressureLaw) -> float:
    """Integral of <nu, s|v - U|^2 / 2 + P(s) - P'(r)(s - r) - P(r)>."""
    nu.grid.check(r)
    nu.grid.check(U, rank=1)
    if np.any(r <= 0):
        raise DomainError("reference density must be positive")
    kin = 0.5 * moment(nu, "s*|v-U|^2", U=U)
    ent = moment(nu, "bregman(s,r)", r=r, law=law)
    return float(nu.grid.integrate(kin + ent))


def pairwise_alignment_identity(nu_x: Sequence[Atom], nu_y: Sequence[Atom], psi_val: float) -> tuple[float, float]:
    """Moment form and product-measure form of the alignment pair energy at one point pair.

    lhs = psi [ <s|v|^2>/2 <sigma> - <s v>.<sigma w> + <s>/2 <sigma|w|^2> ]
    rhs = psi/2 sum_j sum_k w_j w_k s_j sigma_k |v_j - w_k|^2
    """
    _check_probability(nu_x)
    _check_probability(nu_y)
    if psi_val < 0:
        raise ValueError("psi value must be nonnegative")

    def moments(atoms):
        w = np.array([a.weight for a in atoms])
        s = np.array([a.s for a in atoms])
        v = np.array([a.v for a in atoms], dtype=float)
        ws = w * s
        return ws.sum(), ws @ v, ws @ np.sum(v * v, axis=1)

    m0x, m1x, m2x = moments(nu_x)
    m0y, m1y, m2y = moments(nu_y)
    lhs = psi_val * (0.5 * m2x * m0y - float(m1x @ m1y) + 0.5 * m0x * m2y)

    rhs = 0.0
    for a in nu_x:
        va = np.asarray(a.v)
        for b in nu_y:
            d = va - np.asarray(b.v)
            rhs += a.weight * b.weight * a.s * b.s * float(d @ d)
    return float(lhs), float(0.5 * psi_val * rhs)


def l1_density_gap(nu: AtomicYoungMeasure, r: np.ndarray, law: PressureLaw,
                   bounds: Optional[tuple] = None) -> tuple[float, float]:
    """(integral of <nu, |s - r|>, Hoelder majorant without its pointwise constant)."""
    nu.grid.check(r)
    lo, hi = bounds if bounds is not None else (0.0, np.inf)
    if not (np.all(r > lo) and np.all(r <= hi) and np.all(np.isfinite(r))):
        raise DomainError("reference density outside its bounds")
    g = nu.grid
    gap = g.integrate(moment(nu, "|s-r|", r=r))
    breg = g.integrate(moment(nu, "bregman(s,r)", r=r, law=law))
    mass = g.integrate(1.0 + moment(nu, "s"))
    return float(gap), float(np.sqrt(max(breg, 0.0) * mass))


def random_atoms(rng: np.random.Generator, n_atoms: int, dim: int, s_max: float = 3.0,
                 v_scale: float = 2.0) -> list[Atom]:
    w = rng.dirichlet(np.ones(n_atoms))
    w = w / w.sum()
    # dirichlet can return exact zeros for tiny concentrations; nudge them
    w = np.maximum(w, 1e-12)
    w = w / w.sum()
    return [Atom(float(wi), float(rng.uniform(0, s_max)), tuple(rng.normal(0, v_scale, dim))) for wi in w]
