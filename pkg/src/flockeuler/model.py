"""Closures of the flocking Euler system: pressure, friction and interaction kernels.

Also hosts the hypothesis validator that the solver consults before running.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .fields import TorusGrid


class DomainError(ValueError):
    """Argument outside the domain of a closure (e.g. negative density)."""


class ConfigurationError(ValueError):
    pass


def _nonneg(x, name="rho"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite and >= 0")
    return x


def _as_result(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class PressureLaw:
    """Gamma law p = kappa * rho**gamma with potential P = kappa (rho**gamma - rho) / (gamma - 1)."""

    kappa: float = 1.0
    gamma: float = 1.4
    kind: str = "gamma_law"

    def __post_init__(self):
        if self.kind != "gamma_law":
            raise ConfigurationError(f"unknown pressure law {self.kind!r}")
        if not (np.isfinite(self.kappa) and np.isfinite(self.gamma)) or self.gamma <= 0:
            raise ConfigurationError("pressure law needs finite kappa and gamma > 0")
        if self.gamma == 1.0:
            raise ConfigurationError("isothermal gamma = 1 has a logarithmic potential; not supported")

    def p(self, rho):
        return self.kappa * rho**self.gamma

    def dp(self, rho):
        return self.kappa * self.gamma * rho ** (self.gamma - 1.0)

    def potential(self, rho):
        return self.kappa * (rho**self.gamma - rho) / (self.gamma - 1.0)

    def dpotential(self, rho):
        return self.kappa * (self.gamma * rho ** (self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)

    def d2potential(self, rho):
        """P'' = p'(rho) / rho."""
        return self.kappa * self.gamma * rho ** (self.gamma - 2.0)

    def sound_speed(self, rho):
        return np.sqrt(self.dp(rho))


def pressure(rho, law: PressureLaw):
    return _as_result(law.p(_nonneg(rho)))


def pressure_potential(rho, law: PressureLaw):
    return _as_result(law.potential(_nonneg(rho)))


_SERIES_TERMS = 12
_SERIES_RADIUS = 1e-2


def _bregman_unit(x, gamma):
    """x**gamma - 1 - gamma (x - 1), accurate near x = 1."""
    h = x - 1.0
    out = np.empty_like(h)
    near = np.abs(h) < _SERIES_RADIUS
    hn = h[near]
    acc = np.zeros_like(hn)
    for k in range(_SERIES_TERMS, 1, -1):
        acc = (acc + _gbinom(gamma, k)) * hn
    out[near] = acc * hn
    hf = h[~near]
    with np.errstate(divide="ignore"):  # s = 0 gives log1p(-1) = -inf and expm1 -> -1
        out[~near] = np.expm1(gamma * np.log1p(hf)) - gamma * hf
    return np.maximum(out, 0.0)


def _gbinom(a, k):
    num = 1.0
    for j in range(k):
        num *= a - j
    return num / float(np.prod(np.arange(1, k + 1)))


def bregman(s, r, law: PressureLaw):
    """P(s) - P'(r)(s - r) - P(r), evaluated without cancellation near s = r."""
    s = _nonneg(s, "s")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise DomainError("reference density r must be > 0")
    s, r = np.broadcast_arrays(s, r)
    x = np.atleast_1d(s / r)
    val = law.kappa / (law.gamma - 1.0) * np.atleast_1d(r) ** law.gamma * _bregman_unit(x, law.gamma)
    return _as_result(val.reshape(s.shape))


@dataclass(frozen=True)
class FrictionLaw:
    """H(z) = h_inf z / (1 + z); ``kind='off'`` drops the whole friction term."""

    kind: str = "saturating"
    h_inf: float = 2.0
    z0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("off", "saturating"):
            raise ConfigurationError(f"unknown friction law {self.kind!r}")

    @property
    def active(self) -> bool:
        return self.kind != "off"

    def H(self, z):
        return self.h_inf * z / (1.0 + z)

    def dH(self, z):
        return self.h_inf / (1.0 + z) ** 2


def friction_factor(speed_sq, law: FrictionLaw):
    z = _nonneg(speed_sq, "speed_sq")
    if not law.active:
        return _as_result(np.zeros_like(z))
    return _as_result(1.0 - law.H(z))


@dataclass(frozen=True)
class KernelSpec:
    """Even kernel given by a finite cosine series.

    ``zero``: K = 0.  ``cosine``: K = amplitude * prod_i (1 + cos(pi x_i)) / 2.
    ``fourier_table``: K = sum_k c_k cos(pi k.x), ``table`` holding ``(k, c_k)`` pairs.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "cosine", "fourier_table"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        table = tuple((tuple(int(i) for i in k), float(c)) for k, c in self.table)
        object.__setattr__(self, "table", table)

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "cosine":
            return self.amplitude == 0.0
        return all(c == 0.0 for _, c in self.table)

    def max_mode(self) -> int:
        if self.kind == "cosine":
            return 1
        if self.kind == "fourier_table" and self.table:
            return max(max(abs(i) for i in k) for k, _ in self.table)
        return 0

    def exp_coefficients(self, dim: int) -> dict[tuple, float]:
        """Coefficients a_k of K = sum_k a_k exp(i pi k.x); real and a_k = a_{-k}."""
        out: dict[tuple, float] = {}
        if self.kind == "cosine":
            one = {-1: 0.25, 0: 0.5, 1: 0.25}
            for k in np.ndindex(*(3,) * dim):
                k = tuple(i - 1 for i in k)
                out[k] = self.amplitude * float(np.prod([one[i] for i in k]))
        elif self.kind == "fourier_table":
            for k, c in self.table:
                if len(k) != dim:
                    raise ConfigurationError(f"wavevector {k} does not have {dim} components")
                neg = tuple(-i for i in k)
                if k == neg:
                    out[k] = out.get(k, 0.0) + c
                else:
                    out[k] = out.get(k, 0.0) + 0.5 * c
                    out[neg] = out.get(neg, 0.0) + 0.5 * c
        return out

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Direct evaluation at points ``x`` of shape ``(dim, ...)``."""
        if self.kind == "zero":
            return np.zeros(x.shape[1:])
        if self.kind == "cosine":
            return self.amplitude * np.prod((1.0 + np.cos(np.pi * x)) / 2.0, axis=0)
        out = np.zeros(x.shape[1:])
        for k, c in self.table:
            out += c * np.cos(np.pi * np.tensordot(np.asarray(k, float), x, axes=1))
        return out

    def evaluate_gradient(self, x: np.ndarray) -> np.ndarray:
        dim = x.shape[0]
        if self.kind == "zero":
            return np.zeros(x.shape)
        if self.kind == "cosine":
            half = (1.0 + np.cos(np.pi * x)) / 2.0
            out = np.empty(x.shape)
            for i in range(dim):
                others = np.prod(np.delete(half, i, axis=0), axis=0) if dim > 1 else 1.0
                out[i] = self.amplitude * (-0.5 * np.pi * np.sin(np.pi * x[i])) * others
            return out
        out = np.zeros(x.shape)
        for k, c in self.table:
            s = np.sin(np.pi * np.tensordot(np.asarray(k, float), x, axes=1))
            for i in range(dim):
                out[i] -= c * np.pi * k[i] * s
        return out


def sample_kernel(spec: KernelSpec, grid: TorusGrid) -> np.ndarray:
    if 2 * spec.max_mode() + 2 > grid.m:
        raise ConfigurationError(
            f"grid M={grid.m} too coarse for kernel modes up to {spec.max_mode()}"
        )
    return spec.evaluate(grid.coords)


@dataclass(frozen=True)
class ModelSpec:
    pressure: PressureLaw = field(default_factory=PressureLaw)
    friction: FrictionLaw = field(default_factory=FrictionLaw)
    attraction: KernelSpec = field(default_factory=KernelSpec)
    alignment: KernelSpec = field(default_factory=KernelSpec)
    epsilon: float = 0.0
    density_reg: float = 0.0
    # callable (t, grid) -> (f_rho, f_m), or None
    forcing: Optional[Callable[[float, TorusGrid], Any]] = None

    @property
    def viscous(self) -> bool:
        return self.epsilon > 0


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[HypothesisCheck]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[HypothesisCheck]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{tag}] {c.name}" + (f"  ({c.detail})" if c.detail else ""))
        return "\n".join(lines)


def validate_model(spec: ModelSpec, grid: Optional[TorusGrid] = None) -> ValidationReport:
    """Check the structural hypotheses on p, H, K, psi, epsilon.

    Nonnegativity of a tabulated psi is checked by scanning ``grid``
    (default: 64 points per axis); built-in cosine kernels are checked exactly.
    """
    law = spec.pressure
    g = law.gamma
    checks = [
        HypothesisCheck("p(0) = 0", law.p(0.0) == 0.0),
        HypothesisCheck("p'(rho) > 0 for rho > 0", law.kappa > 0 and g > 0, f"kappa={law.kappa}, gamma={g}"),
        HypothesisCheck("liminf p'(rho) > 0 as rho -> inf", law.kappa > 0 and g > 1, "needs gamma > 1"),
        HypothesisCheck(
            "liminf P/p > 0 as rho -> inf",
            g > 1,
            f"P/p -> 1/(gamma-1) = {1.0 / (g - 1.0):.6g}",
        ),
    ]

    fr = spec.friction
    if fr.active:
        checks.append(HypothesisCheck("0 <= H <= H_inf", fr.h_inf >= 0, f"H_inf={fr.h_inf}"))
        checks.append(HypothesisCheck("H' >= 0 for z >= z0", fr.h_inf >= 0 and fr.z0 >= 0))
    else:
        checks.append(HypothesisCheck("friction", True, "off"))

    dim = grid.dim if grid is not None else None
    for role, ker in (("K", spec.attraction), ("psi", spec.alignment)):
        coeffs = ker.exp_coefficients(dim) if dim else {}
        even = all(np.isclose(c, coeffs.get(tuple(-i for i in k), np.nan), rtol=0, atol=0)
                   for k, c in coeffs.items())
        checks.append(HypothesisCheck(f"{role} even", even, "cosine series"))
    checks.append(HypothesisCheck("K in C^2, psi in C^1", True, "finite cosine series"))

    psi = spec.alignment
    if psi.kind == "cosine":
        ok, detail = psi.amplitude >= 0, f"b={psi.amplitude}"
    elif psi.kind == "fourier_table" and not psi.is_zero:
        scan = grid if grid is not None else TorusGrid(len(psi.table[0][0]), 64)
        try:
            vals = sample_kernel(psi, scan)
            lo = float(vals.min())
            ok = lo >= -1e-14 * max(1.0, float(np.abs(vals).max()))
            detail = f"grid min {lo:.3e} on M={scan.m}"
        except ConfigurationError as exc:
            ok, detail = False, str(exc)
    else:
        ok, detail = True, "psi = 0"
    checks.append(HypothesisCheck("psi >= 0", ok, detail))

    if grid is not None:
        for role, ker in (("K", spec.attraction), ("psi", spec.alignment)):
            need = 2 * ker.max_mode() + 2
            checks.append(HypothesisCheck(f"grid resolves {role}", grid.m >= need, f"M={grid.m} >= {need}"))

    checks.append(HypothesisCheck("epsilon >= 0", spec.epsilon >= 0, f"epsilon={spec.epsilon}"))
    checks.append(HypothesisCheck("density_reg >= 0", spec.density_reg >= 0))
    return ValidationReport(checks)
