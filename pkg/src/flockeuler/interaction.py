"""Periodic convolutions with the interaction kernels K and psi.

The FFT backend multiplies spectral coefficients by the exact cosine-series
coefficients of the kernel.  The direct backend forms the full circulant
matrix of kernel samples (O(M^(2N)) work) and exists as an oracle for small
grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import TorusGrid
from .model import ConfigurationError, KernelSpec, sample_kernel


class GridMismatchError(ValueError):
    pass


class KernelError(ValueError):
    pass


def _coefficient_array(spec: KernelSpec, grid: TorusGrid) -> np.ndarray:
    """Exponential coefficients of an even cosine-series kernel in rfftn layout."""
    if 2 * spec.max_mode() + 2 > grid.m:
        raise ConfigurationError(f"grid M={grid.m} too coarse for kernel modes up to {spec.max_mode()}")
    out = np.zeros(grid.spectral_shape)
    for k, a in spec.exp_coefficients(grid.dim).items():
        if k[-1] < 0:
            continue
        idx = tuple(i % grid.m for i in k[:-1]) + (k[-1],)
        out[idx] += a
    return out


@dataclass(frozen=True, eq=False)
class ConvolutionEngine:
    grid: TorusGrid
    kernel_hat: np.ndarray
    samples: np.ndarray
    grad_samples: np.ndarray
    backend: str = "fft"
    nonnegative: bool = True

    @classmethod
    def from_spec(cls, spec: KernelSpec, grid: TorusGrid, backend: str = "fft") -> "ConvolutionEngine":
        samples = sample_kernel(spec, grid)
        lo = float(samples.min()) if samples.size else 0.0
        return cls(
            grid=grid,
            kernel_hat=_coefficient_array(spec, grid),
            samples=samples,
            grad_samples=spec.evaluate_gradient(grid.coords),
            backend=backend,
            nonnegative=lo >= -1e-14 * max(1.0, float(np.abs(samples).max())),
        )

    @classmethod
    def from_samples(cls, samples: np.ndarray, grid: TorusGrid, backend: str = "fft") -> "ConvolutionEngine":
        grid.check(samples)
        centred = np.roll(samples, -(grid.m // 2), axis=tuple(range(grid.dim)))
        khat = grid.forward(centred)
        if np.abs(khat.imag).max() > 1e-13 * max(1.0, np.abs(khat).max()):
            raise KernelError("sampled kernel is not even: spectral coefficients are not real")
        return cls(
            grid=grid,
            kernel_hat=khat.real.copy(),
            samples=samples,
            grad_samples=grid.gradient(samples),
            backend=backend,
            nonnegative=bool(samples.min() >= -1e-14 * max(1.0, np.abs(samples).max())),
        )

    def with_backend(self, backend: str) -> "ConvolutionEngine":
        return ConvolutionEngine(self.grid, self.kernel_hat, self.samples, self.grad_samples,
                                 backend, self.nonnegative)

    @cached_property
    def is_zero(self) -> bool:
        return not np.any(self.kernel_hat)

    @cached_property
    def multiplier(self) -> np.ndarray:
        return self.grid.volume * self.kernel_hat

    @cached_property
    def _circulant(self) -> np.ndarray:
        return _circulant(self.samples, self.grid)

    @cached_property
    def _grad_circulant(self) -> np.ndarray:
        return np.array([_circulant(g, self.grid) for g in self.grad_samples])

    def _check(self, f: np.ndarray, rank: int = 0):
        try:
            self.grid.check(f, rank)
        except ValueError as exc:
            raise GridMismatchError(str(exc)) from None

    # spectral-space entry points used by the dynamics
    def convolve_hat(self, fhat: np.ndarray) -> np.ndarray:
        return self.multiplier * fhat

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """(kernel * f)(x) = integral over the torus of kernel(x - y) f(y) dy."""
        self._check(f)
        if self.backend == "direct":
            return self.grid.cell_volume * (self._circulant @ f.ravel()).reshape(self.grid.shape)
        return self.grid.inverse(self.multiplier * self.grid.forward(f))

    def grad_convolve(self, f: np.ndarray) -> np.ndarray:
        self._check(f)
        if self.backend == "direct":
            flat = f.ravel()
            return self.grid.cell_volume * np.array(
                [(c @ flat).reshape(self.grid.shape) for c in self._grad_circulant]
            )
        return self.grid.inverse(self.grid.gradient_hat(self.multiplier * self.grid.forward(f)))


def _circulant(samples: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """C[i, j] = kernel(x_i - x_j) over flattened grid indices."""
    idx = np.indices(grid.shape).reshape(grid.dim, -1)
    # grid index 0 sits at x = -1, so displacement d lives at sample index d + M/2
    diff = (idx[:, :, None] - idx[:, None, :] + grid.m // 2) % grid.m
    return samples[tuple(diff)]


def alignment_dissipation(engine: ConvolutionEngine, rho: np.ndarray, u: np.ndarray) -> float:
    """Half the double integral of rho(x) rho(y) psi(x - y) |u(x) - u(y)|^2.

    Evaluated in the expanded single-convolution form
    int rho |u|^2 (psi * rho) - int rho u . (psi * (rho u)).
    """
    if not engine.nonnegative:
        raise KernelError("alignment kernel failed the psi >= 0 check")
    grid = engine.grid
    engine._check(rho)
    engine._check(u, rank=1)
    if engine.is_zero:
        return 0.0
    m = rho * u
    total = grid.integrate(rho * np.sum(u * u, axis=0) * engine.convolve(rho))
    for i in range(grid.dim):
        total -= grid.integrate(m[i] * engine.convolve(m[i]))
    return float(total)


def pairwise_alignment_dissipation(psi_samples: np.ndarray, rho: np.ndarray, u: np.ndarray,
                                   grid: TorusGrid) -> float:
    """Brute-force 1/2 sum_x sum_y rho rho psi |u(x) - u(y)|^2 vol^2 (small grids only)."""
    c = _circulant(psi_samples, grid)
    r = rho.ravel()
    uf = u.reshape(grid.dim, -1)
    du2 = np.sum((uf[:, :, None] - uf[:, None, :]) ** 2, axis=0)
    return float(0.5 * grid.cell_volume**2 * np.einsum("i,j,ij,ij->", r, r, c, du2))


def momentum_exchange(engine: ConvolutionEngine, rho: np.ndarray, m: np.ndarray) -> np.ndarray:
    """int [rho (psi * m) - m (psi * rho)] dx, componentwise; vanishes for even psi."""
    cr = engine.convolve(rho)
    return np.array([engine.grid.integrate(rho * engine.convolve(mi) - mi * cr) for mi in m])


def interaction_pair(attraction: KernelSpec, alignment: KernelSpec, grid: TorusGrid,
                     backend: str = "fft") -> tuple[ConvolutionEngine, ConvolutionEngine]:
    return (ConvolutionEngine.from_spec(attraction, grid, backend),
            ConvolutionEngine.from_spec(alignment, grid, backend))


__all__ = [
    "ConvolutionEngine",
    "GridMismatchError",
    "KernelError",
    "alignment_dissipation",
    "pairwise_alignment_dissipation",
    "momentum_exchange",
    "interaction_pair",
]
