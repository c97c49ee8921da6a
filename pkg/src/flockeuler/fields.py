"""Periodic grids on the torus [-1, 1]^N and spectral operators on them.

Fields are plain numpy arrays.  A scalar field on an N-dimensional grid has
shape ``(M,) * N`` (C order, axis 0 slowest); a vector field has shape
``(N,) + (M,) * N``.  Spectral coefficients use the ``rfftn`` layout and are
normalised so that ``f(x) = sum_k fhat[k] exp(i pi k.x)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DOMAIN_SIDE = 2.0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform sampling of the periodic box [-1, 1]^dim with M points per axis."""

    dim: int
    m: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.m < 4 or self.m % 2:
            raise ValueError(f"points per axis must be even and >= 4, got {self.m}")

    @property
    def points_per_axis(self) -> int:
        return self.m

    @property
    def spacing(self) -> float:
        return DOMAIN_SIDE / self.m

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return DOMAIN_SIDE**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.dim

    @property
    def size(self) -> int:
        return self.m**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        """Physical coordinates, shape ``(dim,) + shape``."""
        x1 = -1.0 + np.arange(self.m) * self.spacing
        return np.array(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.m,) * (self.dim - 1) + (self.m // 2 + 1,)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumbers in rfftn layout, shape ``(dim,) + spectral_shape``."""
        full = np.fft.fftfreq(self.m, 1.0 / self.m)
        half = np.fft.rfftfreq(self.m, 1.0 / self.m)
        k1d = [full] * (self.dim - 1) + [half]
        return np.array(np.meshgrid(*k1d, indexing="ij"))

    @cached_property
    def derivative_symbol(self) -> np.ndarray:
        # odd derivatives drop the Nyquist mode
        k = self.modes.astype(float)
        k[np.abs(self.modes) == self.m // 2] = 0.0
        return 1j * np.pi * k

    @cached_property
    def _lap(self) -> np.ndarray:
        return -(np.pi**2) * np.sum(self.modes.astype(float) ** 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # strict inequality: a product of two kept modes then never aliases back into the kept band
        return np.all(3 * np.abs(self.modes) < self.m, axis=0)

    @property
    def max_retained_mode(self) -> int:
        return (self.m - 1) // 3

    # transforms -----------------------------------------------------------
    def forward(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.axes) / self.size

    def inverse(self, fhat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fhat * self.size, s=self.shape, axes=self.axes)

    # spectral-space operators ---------------------------------------------
    def gradient_hat(self, fhat: np.ndarray) -> np.ndarray:
        return self.derivative_symbol * fhat

    def divergence_hat(self, vhat: np.ndarray) -> np.ndarray:
        return np.sum(self.derivative_symbol * vhat, axis=0)

    def laplacian_hat(self, fhat: np.ndarray) -> np.ndarray:
        return self._lap * fhat

    # physical-space operators ---------------------------------------------
    def gradient(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(self.gradient_hat(self.forward(f)))

    def divergence(self, v: np.ndarray) -> np.ndarray:
        return self.inverse(self.divergence_hat(self.forward(v)))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(self.laplacian_hat(self.forward(f)))

    def integrate(self, f: np.ndarray) -> float | np.ndarray:
        """Rectangle rule over the torus; vector fields integrate componentwise."""
        return self.cell_volume * np.sum(f, axis=self.axes)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero every mode with some |k_i| >= M/3 (2/3 rule)."""
        return self.inverse(self.dealias_mask * self.forward(f))

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.dealias(a * b)

    def check(self, f: np.ndarray, rank: int = 0) -> None:
        expected = (self.dim,) * rank + self.shape
        if f.shape != expected:
            raise ValueError(f"field shape {f.shape} does not match grid shape {expected}")

    def trig_field(self, wavevector, kind: str = "cos") -> np.ndarray:
        """cos or sin of pi k.x sampled on the grid."""
        phase = np.pi * np.tensordot(np.asarray(wavevector, dtype=float), self.coords, axes=1)
        return np.cos(phase) if kind == "cos" else np.sin(phase)

    def restrict(self, f: np.ndarray, coarse: "TorusGrid") -> np.ndarray:
        """Sample a field of this grid on a coarser grid whose points are a subset."""
        if coarse.dim != self.dim or self.m % coarse.m:
            raise ValueError(f"cannot restrict M={self.m} to M={coarse.m}")
        stride = self.m // coarse.m
        index = (slice(None),) * (f.ndim - self.dim) + (slice(None, None, stride),) * self.dim
        return f[index]
