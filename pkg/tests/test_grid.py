"""Tests for the periodic grid and spectral calculus.

The transform convention is pinned by two independent oracles: an impulse
(whose quadrature transform is exactly h^3 for every mode) and a direct
O(n^3) quadrature of an analytic Gaussian at off-lattice frequencies,
compared against the closed-form continuous transform.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magscat.grid import (
    ScalarField,
    VectorField3,
    curl,
    dft_at,
    divergence,
    forward_transform,
    gradient,
    idft_at,
    integrate,
    inverse_transform,
    l2_norm,
    laplacian,
    make_grid,
    sup_norm,
    weighted_l1_norm,
)


def gaussian_field(grid, sigma=0.18, center=(0.0, 0.0, 0.0)):
    X1, X2, X3 = grid.coordinate_arrays()
    r2 = (X1 - center[0]) ** 2 + (X2 - center[1]) ** 2 + (X3 - center[2]) ** 2
    return ScalarField(grid, np.exp(-r2 / (2.0 * sigma**2)))


def gaussian_hat(xi, sigma=0.18, center=(0.0, 0.0, 0.0)):
    # continuous transform of exp(-|x-c|^2/(2 sigma^2)) under e^{+i x.xi}
    xi = np.atleast_2d(xi)
    mag2 = (xi**2).sum(axis=1)
    phase = np.exp(1j * xi @ np.asarray(center))
    return (2.0 * np.pi * sigma**2) ** 1.5 * np.exp(-(sigma**2) * mag2 / 2.0) * phase


def test_impulse_transform_is_flat():
    # a unit impulse at the origin node transforms to exactly h^3
    grid = make_grid(16, 1.0)
    vals = np.zeros(grid.shape)
    vals[8, 8, 8] = 1.0  # node index n/2 is x = 0
    ghat = forward_transform(ScalarField(grid, vals))
    assert np.allclose(ghat.values, grid.cell_volume, atol=1e-15)


def test_transform_matches_analytic_gaussian():
    grid = make_grid(48, 1.0)
    f = gaussian_field(grid, sigma=0.12, center=(0.1, -0.07, 0.04))
    ghat = forward_transform(f)
    K1, K2, K3 = grid.xi_arrays()
    lattice = np.stack([K1.ravel(), K2.ravel(), K3.ravel()], axis=-1)
    exact = gaussian_hat(lattice, sigma=0.12, center=(0.1, -0.07, 0.04))
    err = np.abs(ghat.values.ravel() - exact).max()
    assert err < 1e-9 * np.abs(exact).max()


def test_dft_at_off_lattice_matches_analytic():
    grid = make_grid(48, 1.0)
    f = gaussian_field(grid, sigma=0.12)
    rng = np.random.default_rng(7)
    xi = rng.uniform(-8.0, 8.0, size=(40, 3))
    vals = dft_at(f, xi)
    exact = gaussian_hat(xi, sigma=0.12)
    assert np.abs(vals - exact).max() < 1e-9


def test_dft_at_agrees_with_lattice_transform():
    grid = make_grid(24, 1.0)
    rng = np.random.default_rng(3)
    f = ScalarField(grid, rng.standard_normal(grid.shape))
    ghat = forward_transform(f)
    # pick a few lattice frequencies and compare against the direct quadrature
    idx = [(0, 0, 0), (1, 2, 3), (5, 0, 7), (23, 22, 1)]
    K1, K2, K3 = grid.xi_arrays()
    pts = np.array([[K1[i], K2[i], K3[i]] for i in idx])
    direct = dft_at(f, pts)
    lattice = np.array([ghat.values[i] for i in idx])
    assert np.abs(direct - lattice).max() < 1e-12


def test_idft_at_matches_grid_values():
    grid = make_grid(16, 1.0)
    rng = np.random.default_rng(5)
    f = ScalarField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    fh = forward_transform(f)
    # synthesis at exact node locations must reproduce the samples
    nodes = grid.points()[::37]
    vals = idft_at(fh, nodes)
    expected = f.values.reshape(-1)[::37]
    assert np.abs(vals - expected).max() < 1e-12


def test_round_trip_identity():
    grid = make_grid(16, 0.8)
    rng = np.random.default_rng(11)
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    f = ScalarField(grid, vals)
    back = inverse_transform(forward_transform(f))
    assert np.abs(back.values - vals).max() < 1e-13


@settings(max_examples=25, deadline=None)
@given(
    n=st.sampled_from([8, 12, 16]),
    L=st.floats(0.5, 3.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_round_trip_property(n, L, seed):
    grid = make_grid(n, L)
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    back = inverse_transform(forward_transform(ScalarField(grid, vals)))
    assert np.abs(back.values - vals).max() < 1e-12 * max(1.0, np.abs(vals).max())


def test_parseval():
    grid = make_grid(16, 1.3)
    rng = np.random.default_rng(2)
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    f = ScalarField(grid, vals)
    fh = forward_transform(f)
    lhs = grid.cell_volume * (np.abs(vals) ** 2).sum()
    rhs = grid.xi_spacing**3 / (2 * np.pi) ** 3 * (np.abs(fh.values) ** 2).sum()
    assert abs(lhs - rhs) < 1e-12 * lhs


def test_gradient_matches_analytic():
    grid = make_grid(48, 1.0)
    sigma = 0.15
    f = gaussian_field(grid, sigma=sigma)
    gf = gradient(f)
    X = grid.coordinate_arrays()
    for c in range(3):
        exact = -X[c] / sigma**2 * f.values
        err = np.abs(gf.values[c] - exact).max()
        assert err < 1e-8 * np.abs(exact).max()


def test_gradient_matches_finite_differences():
    # independent oracle: 6th-order centered differences on a random
    # band-limited periodic field (exactly representable on the grid)
    grid = make_grid(32, 1.0)
    rng = np.random.default_rng(9)
    modes = np.zeros(grid.shape, dtype=complex)
    for _ in range(12):
        m = rng.integers(-2, 3, size=3)
        modes[tuple(m % grid.n)] = rng.standard_normal() + 1j * rng.standard_normal()
    from magscat.grid import SpectralField

    f = inverse_transform(SpectralField(grid, modes))
    gf = gradient(f)
    h = grid.spacing
    v = f.values
    # 6th-order stencil truncation ~ xi*(xi*h)^6/140 per mode; with |m| <= 2
    # that is ~3e-5 per unit amplitude, so 2e-3 catches sign/scale mistakes
    # with a wide margin while tolerating the stencil's own error
    for axis in range(3):
        stencil = (
            45.0 * (np.roll(v, -1, axis) - np.roll(v, 1, axis))
            - 9.0 * (np.roll(v, -2, axis) - np.roll(v, 2, axis))
            + (np.roll(v, -3, axis) - np.roll(v, 3, axis))
        ) / (60.0 * h)
        err = np.abs(gf.values[axis] - stencil).max()
        assert err < 2e-3 * max(1.0, np.abs(stencil).max())


def test_curl_of_gradient_vanishes():
    grid = make_grid(24, 1.0)
    f = gaussian_field(grid, sigma=0.2)
    cg = curl(gradient(f))
    assert sup_norm(cg) < 1e-10


def test_divergence_of_curl_vanishes():
    grid = make_grid(24, 1.0)
    rng = np.random.default_rng(4)
    comps = [gaussian_field(grid, sigma=0.2, center=tuple(rng.uniform(-0.1, 0.1, 3))).values
             for _ in range(3)]
    v = VectorField3(grid, np.stack(comps))
    dc = divergence(curl(v))
    assert sup_norm(dc) < 1e-10


def test_laplacian_is_div_grad():
    grid = make_grid(24, 1.0)
    f = gaussian_field(grid, sigma=0.2)
    lap = laplacian(f)
    dg = divergence(gradient(f))
    assert np.abs(lap.values - dg.values).max() < 1e-10


def test_integrate_and_norms():
    grid = make_grid(48, 1.0)
    sigma = 0.12
    f = gaussian_field(grid, sigma=sigma)
    # integral of the Gaussian: (2 pi sigma^2)^{3/2}
    assert abs(integrate(f) - (2 * np.pi * sigma**2) ** 1.5) < 1e-10
    # L2 norm: (pi sigma^2)^{3/4}
    assert abs(l2_norm(f) - (np.pi * sigma**2) ** 0.75) < 1e-10
    assert abs(sup_norm(f) - 1.0) < 1e-12


def test_weighted_l1_norm_against_direct_sum():
    grid = make_grid(16, 1.0)
    rng = np.random.default_rng(6)
    from magscat.grid import SpectralField

    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    fh = SpectralField(grid, vals)
    tau = 1.5
    direct = 0.0
    xi1 = grid.axis_xi
    for i in range(grid.n):
        for j in range(grid.n):
            for k in range(grid.n):
                w = (1.0 + xi1[i] ** 2 + xi1[j] ** 2 + xi1[k] ** 2) ** (tau / 2.0)
                direct += w * abs(vals[i, j, k])
    direct *= grid.xi_spacing**3
    assert abs(weighted_l1_norm(fh, tau) - direct) < 1e-9 * direct


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(7, 1.0)
    with pytest.raises(ValueError):
        make_grid(16, -1.0)
