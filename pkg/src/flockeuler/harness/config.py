"""INI-style run configuration with a closed set of keys.

Sections and keys (defaults in brackets)::

    [grid]        dim [2], m [64]
    [model]       preset [gaussian-bump-flock], forcing [manufactured|none],
                  kappa [1.0], gamma [1.4], friction [saturating|off], h_inf [2.0],
                  attraction [zero|cosine|table], attraction_amplitude, attraction_table,
                  alignment [...same three...], epsilon [0.0], density_reg [0.0]
    [integrator]  t_end [1.0], cfl [0.4], dt_max [0.01], n_samples [50], rho_floor
    [sweep]       epsilons, workers [4], mode [matched|perturbed], delta [0.0],
                  reference [manufactured|highres_run]
    [output]      directory [run], snapshots [samples|final|none]

Kernel tables are ``;``-separated terms ``cos(k1,k2): c``.  A ``sin`` term
with nonzero coefficient makes the kernel odd and is rejected.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..dynamics import IntegratorConfig
from ..fields import TorusGrid
from ..model import ConfigurationError, FrictionLaw, KernelSpec, ModelSpec, PressureLaw

_KEYS = {
    "grid": {"dim", "m"},
    "model": {"preset", "forcing", "kappa", "gamma", "friction", "h_inf", "attraction",
              "attraction_amplitude", "attraction_table", "alignment", "alignment_amplitude",
              "alignment_table", "epsilon", "density_reg"},
    "integrator": {"t_end", "cfl", "dt_max", "n_samples", "rho_floor"},
    "sweep": {"epsilons", "workers", "mode", "delta", "reference"},
    "output": {"directory", "snapshots"},
}

_TERM = re.compile(r"^\s*(cos|sin)\s*\(([^)]*)\)\s*:\s*(\S+)\s*$")


@dataclass(frozen=True)
class SweepConfig:
    epsilons: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    workers: int = 4
    mode: str = "matched"
    delta: float = 0.0
    reference: str = "manufactured"

    def __post_init__(self):
        eps = self.epsilons
        if any(e < 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigurationError("sweep epsilons must be nonnegative and strictly decreasing")
        if self.mode not in ("matched", "perturbed"):
            raise ConfigurationError(f"unknown sweep mode {self.mode!r}")
        if self.reference not in ("manufactured", "highres_run"):
            raise ConfigurationError(f"unknown reference kind {self.reference!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    snapshots: str = "samples"

    def __post_init__(self):
        if self.snapshots not in ("samples", "final", "none"):
            raise ConfigurationError(f"unknown snapshot policy {self.snapshots!r}")


@dataclass(frozen=True)
class RunConfig:
    grid: TorusGrid
    model: ModelSpec
    preset: str = "gaussian-bump-flock"
    forcing: str = "manufactured"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def parse_kernel_table(text: str, dim: int) -> tuple:
    terms = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        mt = _TERM.match(chunk)
        if not mt:
            raise ConfigurationError(f"cannot parse kernel term {chunk!r}")
        kind, ks, cs = mt.groups()
        try:
            k = tuple(int(v) for v in ks.split(","))
            c = float(cs)
        except ValueError:
            raise ConfigurationError(f"cannot parse kernel term {chunk!r}") from None
        if len(k) != dim:
            raise ConfigurationError(f"kernel wavevector {k} needs {dim} components")
        if kind == "sin":
            if c != 0.0:
                raise ConfigurationError(f"kernel term {chunk!r} is odd; kernels must be even")
            continue
        terms.append((k, c))
    return tuple(terms)


def _kernel(sec, prefix: str, dim: int) -> KernelSpec:
    kind = sec.get(prefix, "zero")
    if kind == "zero":
        return KernelSpec()
    if kind == "cosine":
        return KernelSpec("cosine", _float(sec, f"{prefix}_amplitude", 1.0))
    if kind == "table":
        return KernelSpec("fourier_table", table=parse_kernel_table(sec.get(f"{prefix}_table", ""), dim))
    raise ConfigurationError(f"unknown {prefix} kernel kind {kind!r}")


def _float(sec, key, default):
    try:
        return sec.getfloat(key, default)
    except ValueError:
        raise ConfigurationError(f"{key} must be a number, got {sec.get(key)!r}") from None


def _int(sec, key, default):
    try:
        return sec.getint(key, default)
    except ValueError:
        raise ConfigurationError(f"{key} must be an integer, got {sec.get(key)!r}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigurationError(f"unknown section [{name}]")
        extra = set(cp[name]) - _KEYS[name]
        if extra:
            raise ConfigurationError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
    sec = {name: (cp[name] if cp.has_section(name) else cp[cp.default_section]) for name in _KEYS}

    try:
        grid = TorusGrid(_int(sec["grid"], "dim", 2), _int(sec["grid"], "m", 64))
        m = sec["model"]
        model = ModelSpec(
            pressure=PressureLaw(_float(m, "kappa", 1.0), _float(m, "gamma", 1.4)),
            friction=FrictionLaw(m.get("friction", "saturating"), _float(m, "h_inf", 2.0)),
            attraction=_kernel(m, "attraction", grid.dim),
            alignment=_kernel(m, "alignment", grid.dim),
            epsilon=_float(m, "epsilon", 0.0),
            density_reg=_float(m, "density_reg", 0.0),
        )
        forcing = m.get("forcing", "manufactured")
        if forcing not in ("manufactured", "none"):
            raise ConfigurationError(f"unknown forcing {forcing!r}")
        it = sec["integrator"]
        floor = it.get("rho_floor")
        integrator = IntegratorConfig(
            t_end=_float(it, "t_end", 1.0), cfl=_float(it, "cfl", 0.4), dt_max=_float(it, "dt_max", 1e-2),
            n_samples=_int(it, "n_samples", 50), rho_floor=None if floor is None else _float(it, "rho_floor", 0.0),
        )
        sw = sec["sweep"]
        eps_text = sw.get("epsilons")
        eps = SweepConfig.epsilons if eps_text is None else tuple(float(e) for e in eps_text.split(","))
        sweep = SweepConfig(eps, _int(sw, "workers", 4), sw.get("mode", "matched"),
                            _float(sw, "delta", 0.0), sw.get("reference", "manufactured"))
        out = sec["output"]
        output = OutputConfig(out.get("directory", "run"), out.get("snapshots", "samples"))
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    return RunConfig(grid, model, m.get("preset", "gaussian-bump-flock"), forcing, integrator, sweep, output)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
