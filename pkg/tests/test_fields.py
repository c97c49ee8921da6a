import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flockeuler.fields import TorusGrid


def test_grid_geometry():
    g = TorusGrid(2, 16)
    assert g.spacing == 0.125
    assert g.cell_volume == 0.125**2
    assert g.coords.shape == (2, 16, 16)
    assert g.coords[0, 0, 0] == -1.0
    assert g.coords[0, -1, 0] == pytest.approx(1.0 - 0.125)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4.0)


@pytest.mark.parametrize("m", [3, 5, 2, 0])
def test_grid_rejects_odd_or_tiny(m):
    with pytest.raises(ValueError):
        TorusGrid(2, m)


def test_gradient_of_constant_is_zero():
    g = TorusGrid(2, 16)
    assert np.abs(g.gradient(np.full(g.shape, 3.7))).max() == 0.0


def test_gradient_band_limited_exact():
    g = TorusGrid(2, 16)
    x, y = g.coords
    d = g.gradient(np.sin(np.pi * x))
    assert np.abs(d[0] - np.pi * np.cos(np.pi * x)).max() < 1e-13
    assert np.abs(d[1]).max() < 1e-13


def test_divergence_and_laplacian():
    g = TorusGrid(2, 32)
    x, y = g.coords
    v = np.array([np.sin(2 * np.pi * x) * np.cos(np.pi * y), np.cos(3 * np.pi * y)])
    exact = 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(np.pi * y) - 3 * np.pi * np.sin(3 * np.pi * y)
    assert np.abs(g.divergence(v) - exact).max() < 1e-12 * 3 * np.pi
    f = np.cos(np.pi * (x + 2 * y))
    assert np.abs(g.laplacian(f) + 5 * np.pi**2 * f).max() < 1e-12 * 5 * np.pi**2


def test_smooth_derivative_converges_spectrally():
    errs = []
    for m in (16, 32):
        g = TorusGrid(1, m)
        x = g.coords[0]
        d = g.gradient(np.exp(np.sin(np.pi * x)))[0]
        errs.append(np.abs(d - np.pi * np.cos(np.pi * x) * np.exp(np.sin(np.pi * x))).max())
    # algebraic order p would give a ratio 2**p; 16 -> 32 gains far more than any modest p
    assert errs[1] < 1e-12
    assert errs[0] / max(errs[1], 1e-16) > 2**10


def test_nyquist_dropped_for_odd_derivatives():
    g = TorusGrid(1, 8)
    saw = np.cos(np.pi * 4 * g.coords[0])  # pure Nyquist mode
    assert np.abs(g.gradient(saw)).max() < 1e-14
    assert np.abs(g.laplacian(saw) + 16 * np.pi**2 * saw).max() < 1e-10


def test_dealias_keeps_two_thirds():
    g = TorusGrid(1, 12)
    x = g.coords[0]
    kept = np.cos(3 * np.pi * x)
    dropped = np.cos(4 * np.pi * x)  # |k| = M/3 exactly
    assert np.abs(g.dealias(kept) - kept).max() < 1e-14
    assert np.abs(g.dealias(dropped)).max() < 1e-14


def band_limited(g, rng, kmax):
    out = np.zeros(g.shape)
    for _ in range(6):
        k = rng.integers(-kmax, kmax + 1, size=g.dim)
        out += rng.normal() * g.trig_field(k, "cos") + rng.normal() * g.trig_field(k, "sin")
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 12), (1, 16), (2, 12), (2, 16)]))
def test_dealiased_product_is_galerkin_projection(seed, shape):
    g = TorusGrid(*shape)
    fine = TorusGrid(g.dim, 2 * g.m)
    rng = np.random.default_rng(seed)
    kmax = g.max_retained_mode
    a, b = band_limited(g, rng, kmax), band_limited(g, np.random.default_rng(seed + 1), kmax)
    rng = np.random.default_rng(seed)
    af, bf = band_limited(fine, rng, kmax), band_limited(fine, np.random.default_rng(seed + 1), kmax)
    # exact product on the fine grid, projected onto the coarse retained modes
    exact = fine.restrict(fine.inverse(fine.forward(af * bf) * _embed_mask(fine, g)), g)
    assert np.abs(g.product(a, b) - exact).max() < 1e-12 * max(1.0, np.abs(a * b).max())


def _embed_mask(fine, coarse):
    return np.all(3 * np.abs(fine.modes) < coarse.m, axis=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 8), (2, 8), (2, 16), (3, 4)]))
def test_transform_round_trip(seed, shape):
    g = TorusGrid(*shape)
    f = np.random.default_rng(seed).normal(size=g.shape)
    assert np.abs(g.inverse(g.forward(f)) - f).max() < 1e-13


def test_check_shapes():
    g = TorusGrid(2, 8)
    g.check(np.zeros((8, 8)))
    g.check(np.zeros((2, 8, 8)), rank=1)
    with pytest.raises(ValueError):
        g.check(np.zeros((8, 9)))


def test_restrict_takes_shared_points():
    fine, coarse = TorusGrid(2, 16), TorusGrid(2, 8)
    f = fine.coords[0] + 2 * fine.coords[1]
    assert np.array_equal(fine.restrict(f, coarse), coarse.coords[0] + 2 * coarse.coords[1])
    with pytest.raises(ValueError):
        coarse.restrict(f, TorusGrid(2, 6))
