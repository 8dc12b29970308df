"""Tests for near-field assembly, operator norms, and the boundary pairing."""

import numpy as np
import pytest
from scipy.special import spherical_jn

from magscat.boundary import (
    NearFieldMatrix,
    apply_near_field,
    assemble_near_field,
    assemble_near_field_difference,
    data_functional,
    near_op_norm,
    single_layer,
    volume_pairing,
)
from magscat.forward import ForwardSolver
from magscat.grid import make_grid
from magscat.potentials import make_pair, smoothed_gaussian, solenoidal_gaussian
from magscat.special import spherical_h1, spherical_h1_derivative, ylm
from magscat.sphere import (
    BoundaryDensity,
    make_sphere,
    sphere_l2_norm,
    ylm_on_sphere,
)


def scattering_pair(grid, a_amp=0.8, q_amp=1.5):
    a = solenoidal_gaussian(
        grid, sigma=0.075, cut_inner=0.3, cut_outer=0.5, amplitude=a_amp
    )
    q = smoothed_gaussian(
        grid, sigma=0.08, cut_inner=0.3, cut_outer=0.5, amplitude=q_amp
    )
    return make_pair(grid, a_field=a, q_field=q, support_radius=0.5)


def random_density(sphere, rng):
    vals = rng.standard_normal(sphere.size) + 1j * rng.standard_normal(sphere.size)
    return BoundaryDensity(sphere, vals)


def harmonic_density(sphere, coeffs):
    vals = np.zeros(sphere.size, dtype=complex)
    for (l, m), c in coeffs.items():
        vals += c * ylm_on_sphere(sphere, l, m)
    return BoundaryDensity(sphere, vals)


def test_single_layer_matches_addition_formula():
    # for h = Y_l^m the layer field has the closed form
    #   ik a^2 j_l(k r_<) h_l(k r_>) Y_l^m(x^),  r_< = min(r, a), r_> = max(r, a),
    # on both sides of the sphere; the Wronskian of (j_l, h_l) then gives the
    # normal-derivative jump of exactly -(-1) * density across the surface
    k, a = 1.8, 0.7
    sphere = make_sphere(a, 16, 32)
    rng = np.random.default_rng(3)
    pts_in = 0.4 * a * _random_unit(rng, 5)
    pts_out = 1.9 * a * _random_unit(rng, 5)
    for l, m in [(0, 0), (1, 1), (2, -1), (3, 2), (6, 3)]:
        src = single_layer(k, BoundaryDensity(sphere, ylm_on_sphere(sphere, l, m)))
        for pts, inside in [(pts_in, True), (pts_out, False)]:
            got = src.field(pts)
            r = np.linalg.norm(pts, axis=1)
            theta = np.arccos(pts[:, 2] / r)
            phi = np.arctan2(pts[:, 1], pts[:, 0])
            radial = (
                spherical_jn(l, k * r) * spherical_h1(l, k * a)
                if inside
                else spherical_jn(l, k * a) * spherical_h1(l, k * r)
            )
            expected = 1j * k * a**2 * radial * ylm(l, m, theta, phi)
            assert np.abs(got - expected).max() < 1e-6 * np.abs(expected).max()
    # jump relation: (d/dr inside - d/dr outside) at r=a equals the density,
    # via the Wronskian j_l h_l' - j_l' h_l = i/(ka)^2 of the closed forms
    for l in (0, 2, 5):
        z = k * a
        jump = (
            1j
            * k
            * a**2
            * k
            * (
                spherical_jn(l, z, derivative=True) * spherical_h1(l, z)
                - spherical_jn(l, z) * spherical_h1_derivative(l, z)
            )
        )
        assert abs(jump - 1.0) < 1e-12


def _random_unit(rng, count):
    v = rng.standard_normal((count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_zero_potentials_give_zero_matrix():
    grid = make_grid(16, 1.0)
    pair = make_pair(grid, support_radius=0.4)
    sphere = make_sphere(0.7, 4, 8)
    matrix = assemble_near_field(pair, 1.3, sphere)
    assert np.abs(matrix.entries).max() == 0.0


def test_sphere_must_clear_the_support():
    grid = make_grid(16, 1.0)
    q = smoothed_gaussian(grid, sigma=0.08, cut_inner=0.3, cut_outer=0.5)
    pair = make_pair(grid, q_field=q, support_radius=0.5)
    with pytest.raises(ValueError):
        assemble_near_field(pair, 1.3, make_sphere(0.55, 4, 8))


def test_near_field_reciprocity_and_transpose_identity():
    # flipping the sign of A transposes the near-field matrix; equivalently
    # the weighted pairing satisfies int f (N_{-A} g) = int (N_A f) g.  The
    # discrete defect is profile-tail aliasing, measured 4.4e-6 relative at
    # n = 48 over all node pairs (1e-7 at n = 64).
    k = 1.6
    grid = make_grid(48, 1.0)
    pair = scattering_pair(grid)
    sphere = make_sphere(0.72, 3, 6)
    n_plus = assemble_near_field(pair, k, sphere, a_sign=+1.0, tol=1e-10)
    n_minus = assemble_near_field(pair, k, sphere, a_sign=-1.0, tol=1e-10)
    scale = np.abs(n_plus.entries).max()
    assert np.abs(n_plus.entries - n_minus.entries.T).max() < 1e-5 * scale

    rng = np.random.default_rng(7)
    f, g = random_density(sphere, rng), random_density(sphere, rng)
    lhs = data_functional(n_minus, None, g, f)
    rhs = data_functional(n_plus, None, f, g)
    assert abs(lhs - rhs) < 1e-5 * abs(lhs)


def test_near_field_symmetric_without_vector_potential():
    grid = make_grid(24, 1.0)
    q = smoothed_gaussian(grid, sigma=0.08, cut_inner=0.3, cut_outer=0.5, amplitude=2.0)
    pair = make_pair(grid, q_field=q, support_radius=0.5)
    matrix = assemble_near_field(pair, 1.9, make_sphere(0.72, 3, 6), tol=1e-10)
    defect = np.abs(matrix.entries - matrix.entries.T).max()
    assert defect < 1e-8 * np.abs(matrix.entries).max()


def test_operator_norm_against_randomized_oracle():
    sphere = make_sphere(0.9, 5, 8)
    rng = np.random.default_rng(11)
    entries = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    n1 = NearFieldMatrix(sphere, entries, k=1.0)
    n2 = NearFieldMatrix(sphere, 0.3 * entries[::-1], k=1.0)

    norm = near_op_norm(n1, n2)
    assert near_op_norm(n1, n1) == 0.0
    assert np.isclose(near_op_norm(NearFieldMatrix(sphere, 2.5 * entries, 1.0)),
                      2.5 * near_op_norm(n1))

    # randomized oracle: power iteration on the weighted operator from many
    # random starts must reproduce the largest singular value
    w = sphere.weights
    delta = n1.entries - n2.entries
    best = 0.0
    for _ in range(100):
        h = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        for _ in range(3):
            g = delta @ (w * h)
            h = np.conj(delta).T @ (w * g)
            h /= np.linalg.norm(h)
        g = delta @ (w * h)
        ratio = np.sqrt((w * np.abs(g) ** 2).sum() / (w * np.abs(h) ** 2).sum())
        best = max(best, ratio)
    assert abs(best - norm) < 0.01 * norm


def test_data_functional_respects_operator_norm_bound():
    sphere = make_sphere(1.1, 4, 8)
    rng = np.random.default_rng(13)
    entries = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    n1 = NearFieldMatrix(sphere, entries, k=1.0)
    n2 = NearFieldMatrix(sphere, np.roll(entries, 3, axis=0), k=1.0)
    norm = near_op_norm(n1, n2)
    for _ in range(20):
        f1, f2 = random_density(sphere, rng), random_density(sphere, rng)
        val = data_functional(n1, n2, f1, f2)
        bound = norm * sphere_l2_norm(sphere, f1.values) * sphere_l2_norm(
            sphere, f2.values
        )
        assert abs(val) <= bound * (1 + 1e-12)


def test_apply_near_field_weights_densities():
    sphere = make_sphere(0.8, 3, 6)
    rng = np.random.default_rng(17)
    entries = rng.standard_normal((18, 18)) + 1j * rng.standard_normal((18, 18))
    matrix = NearFieldMatrix(sphere, entries, k=1.0)
    h = random_density(sphere, rng)
    out = apply_near_field(matrix, h)
    assert np.allclose(out.values, entries @ (sphere.weights * h.values))


def test_pairing_equals_support_quadrature_of_currents():
    # int (N f) g ds telescopes to h^3 sum_p (S g)(x_p) J_{S f}(x_p): the
    # matrix columns are point-source solves, and superposing them with the
    # quadrature weights is exactly the single-layer incident solve
    k = 1.7
    grid = make_grid(24, 1.0)
    pair = scattering_pair(grid, a_amp=0.6, q_amp=1.2)
    sphere = make_sphere(0.72, 4, 8)
    matrix = assemble_near_field(pair, k, sphere, tol=1e-10)
    f = harmonic_density(sphere, {(0, 0): 1.0, (1, -1): 0.7 - 0.2j, (2, 1): 0.4j})
    g = harmonic_density(sphere, {(1, 0): 1.0 - 0.5j, (2, 2): 0.8})

    lhs = complex(
        (sphere.weights * g.values) @ matrix.entries @ (sphere.weights * f.values)
    )
    solver = ForwardSolver(pair, k, tol=1e-10)
    sol = solver.solve(single_layer(k, f))
    v_g = single_layer(k, g).field(solver.support_points)
    rhs = grid.cell_volume * np.sum(v_g * sol.current)
    assert abs(lhs - rhs) < 1e-7 * abs(lhs)


def test_difference_assembly_matches_direct_subtraction():
    k = 1.5
    grid = make_grid(24, 1.0)
    pair1 = scattering_pair(grid, a_amp=0.7, q_amp=1.4)
    pair2 = scattering_pair(grid, a_amp=0.4, q_amp=0.9)
    sphere = make_sphere(0.72, 3, 6)
    n1 = assemble_near_field(pair1, k, sphere, tol=1e-10)
    n2 = assemble_near_field(pair2, k, sphere, tol=1e-10)
    delta = assemble_near_field_difference(pair1, pair2, k, sphere, tol=1e-10)
    direct = n1.entries - n2.entries
    assert np.abs(delta.entries - direct).max() < 1e-6 * np.abs(direct).max()


def test_difference_assembly_survives_tiny_contrasts():
    # for nearly identical pairs the difference solve keeps relative accuracy
    # where direct subtraction loses most digits to cancellation
    k = 1.5
    eps = 1e-5
    grid = make_grid(24, 1.0)
    pair1 = scattering_pair(grid, a_amp=0.6, q_amp=1.2)
    pair2 = scattering_pair(grid, a_amp=0.6 * (1 + eps), q_amp=1.2 * (1 + eps))
    sphere = make_sphere(0.72, 3, 6)
    delta = assemble_near_field_difference(pair1, pair2, k, sphere, tol=1e-12)
    n1 = assemble_near_field(pair1, k, sphere, tol=1e-12)
    n2 = assemble_near_field(pair2, k, sphere, tol=1e-12)
    direct = n1.entries - n2.entries
    scale = np.abs(delta.entries).max()
    assert scale < 2e-4 * np.abs(n1.entries).max()  # the difference is tiny
    assert np.abs(delta.entries - direct).max() < 1e-2 * scale


def test_orthogonality_identity_boundary_equals_volume():
    # the bilinear boundary pairing of N_1 - N_2 equals the volume integral
    # of the first-order difference operator against the two total fields;
    # checked through the difference-mode assembly, plus the integrated-by-
    # parts variant of the volume side computed from both solves directly
    k = 1.7
    grid = make_grid(32, 1.0)
    pair1 = scattering_pair(grid, a_amp=0.8, q_amp=1.5)
    pair2 = scattering_pair(grid, a_amp=0.5, q_amp=0.9)
    sphere = make_sphere(0.75, 6, 12)
    # real-valued densities: the pairing is bilinear (no conjugation), and
    # complex harmonics pair m with -m, which can cancel the value to noise
    rng = np.random.default_rng(23)
    f1 = BoundaryDensity(sphere, rng.standard_normal(sphere.size))
    f2 = BoundaryDensity(sphere, rng.standard_normal(sphere.size))

    delta = assemble_near_field_difference(pair1, pair2, k, sphere, tol=1e-10)
    data_side = data_functional(delta, None, f1, f2)
    volume_side = volume_pairing(pair1, pair2, k, f1, f2, tol=1e-10)
    assert abs(data_side - volume_side) < 2e-2 * abs(volume_side)

    # integrated-by-parts variant: int (u_2 Q_{-A_1,q_1} u_1 - u_1 Q_{A_2,q_2} u_2)
    s1 = ForwardSolver(pair1, k, a_sign=-1.0, tol=1e-10)
    s2 = ForwardSolver(pair2, k, a_sign=+1.0, tol=1e-10)
    sol1 = s1.solve(single_layer(k, f1))
    sol2 = s2.solve(single_layer(k, f2))
    qu1 = s1.apply_q(sol1.u_support, sol1.grad_u_support)
    qu2 = s2.apply_q(sol2.u_support, sol2.grad_u_support)
    variant = grid.cell_volume * np.sum(sol2.u_support * qu1 - sol1.u_support * qu2)
    assert abs(variant - volume_side) < 1e-3 * abs(volume_side)
    assert abs(data_side - variant) < 2e-2 * abs(variant)
