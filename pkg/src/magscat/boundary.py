"""Near-field measurements on a sphere enclosing the scatterer.

Builds the discrete near-field operator -- scattered fields between all
pairs of nodes of a measurement sphere -- from per-source forward solves,
together with the weighted operator norm and the bilinear boundary pairing

    <f1, (N_1 - N_2) f2> = int_dB ((N_1 f_2)(x) - (N_2 f_2)(x)) f_1(x) ds(x)

(no conjugation) that equals a volume integral of the potential difference
against products of total fields.  A dedicated difference-mode assembly
solves directly for the current of ``N_1 - N_2`` so that nearly identical
potential pairs do not lose the difference to cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardSolver, PointSource, SingleLayerSource, greens_kernel
from .potentials import PotentialPair, make_pair
from .grid import VectorField3
from .sphere import BoundaryDensity, SphereGrid

__all__ = [
    "NearFieldMatrix",
    "single_layer",
    "assemble_near_field",
    "assemble_near_field_difference",
    "apply_near_field",
    "near_op_norm",
    "data_functional",
    "volume_pairing",
]


@dataclass
class NearFieldMatrix:
    """Discrete near-field operator over a measurement sphere.

    ``entries[i, j]`` is the scattered field at receiver node ``x_i`` due to
    a point source at node ``y_j``.  Quadrature weights are applied when the
    operator acts on a density, so the matrix discretizes the map
    h |-> (scattered field of the single-layer incident field S h) restricted
    to the sphere.
    """

    sphere: SphereGrid
    entries: np.ndarray
    k: float

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        n = self.sphere.size
        if self.entries.shape != (n, n):
            raise ValueError("near-field entries must be square over the nodes")


def single_layer(k: float, density: BoundaryDensity) -> SingleLayerSource:
    """Incident field S h radiated by a boundary density on its sphere."""
    return SingleLayerSource(k, density.sphere, density.values)


def _source_kernel(solver: ForwardSolver, sphere: SphereGrid) -> np.ndarray:
    """Green kernel between sphere nodes and support nodes, with clearance."""
    nodes = sphere.points
    d = np.linalg.norm(
        nodes[:, None, :] - solver.support_points[None, :, :], axis=-1
    )
    if d.min() < 2.0 * solver.grid.spacing:
        raise ValueError(
            "measurement sphere must clear the potential support by at least "
            "two grid cells"
        )
    return np.exp(1j * solver.k * d) / (4.0 * np.pi * d)


def _check_solve(info: int, resid: float, j: int):
    if info != 0:
        raise RuntimeError(
            f"forward solve for source {j} did not converge "
            f"(residual {resid:.3g})"
        )


def assemble_near_field(
    pair: PotentialPair,
    k: float,
    sphere: SphereGrid,
    a_sign: float = 1.0,
    tol: float = 1e-8,
    **solver_options,
) -> NearFieldMatrix:
    """Assemble the near-field matrix column by column from point sources.

    Column ``j`` is the scattered field of a point source at node ``y_j``,
    evaluated at every node by quadrature over the contrast source; the
    kernel between sphere nodes and support nodes is shared by the incident
    fields and the output evaluation and is computed once.
    """
    solver = ForwardSolver(pair, k, a_sign=a_sign, tol=tol, **solver_options)
    kernel = _source_kernel(solver, sphere)
    currents = np.empty((solver.n_support, sphere.size), dtype=complex)
    for j in range(sphere.size):
        sol = solver.solve(PointSource(k, sphere.points[j]))
        _check_solve(sol.gmres_info, sol.relative_residual, j)
        currents[:, j] = sol.current
    entries = solver.grid.cell_volume * (kernel @ currents)
    return NearFieldMatrix(sphere=sphere, entries=entries, k=k)


def assemble_near_field_difference(
    pair1: PotentialPair,
    pair2: PotentialPair,
    k: float,
    sphere: SphereGrid,
    a_sign: float = 1.0,
    tol: float = 1e-8,
    **solver_options,
) -> NearFieldMatrix:
    """Assemble ``N_1 - N_2`` directly, without forming either matrix.

    For each source the second pair's total field u_2 is solved, and the
    difference current dJ = Q_1 u_1 - Q_2 u_2 is obtained from

        dJ - Q_1 V dJ = (Q_1 - Q_2) u_2,

    so the subtraction happens in the right-hand side.  When the pairs are
    close, entries come out accurate relative to ``|N_1 - N_2|`` rather than
    relative to ``|N_1|``, which direct subtraction of two assembled
    matrices cannot achieve.
    """
    s1 = ForwardSolver(pair1, k, a_sign=a_sign, tol=tol, **solver_options)
    s2 = ForwardSolver(pair2, k, a_sign=a_sign, tol=tol, **solver_options)
    if not np.array_equal(s1.support_flat, s2.support_flat):
        raise ValueError("difference assembly needs a common support grid")
    kernel = _source_kernel(s1, sphere)
    currents = np.empty((s1.n_support, sphere.size), dtype=complex)
    for j in range(sphere.size):
        sol2 = s2.solve(PointSource(k, sphere.points[j]))
        _check_solve(sol2.gmres_info, sol2.relative_residual, j)
        rhs = s1.apply_q(sol2.u_support, sol2.grad_u_support) - s2.apply_q(
            sol2.u_support, sol2.grad_u_support
        )
        dj, info, resid, _ = s1.solve_current(rhs)
        _check_solve(info, resid, j)
        currents[:, j] = dj
    entries = s1.grid.cell_volume * (kernel @ currents)
    return NearFieldMatrix(sphere=sphere, entries=entries, k=k)


def _same_sphere(n1: NearFieldMatrix, n2: NearFieldMatrix):
    s1, s2 = n1.sphere, n2.sphere
    if (s1.n_theta, s1.n_phi) != (s2.n_theta, s2.n_phi) or not np.isclose(
        s1.radius, s2.radius
    ):
        raise ValueError("near-field matrices live on different spheres")


def apply_near_field(matrix: NearFieldMatrix, density: BoundaryDensity) -> BoundaryDensity:
    """Apply the near-field operator: (N h)(x_i) = sum_j w_j entries[i,j] h_j."""
    if density.sphere is not matrix.sphere:
        if density.values.shape != (matrix.sphere.size,):
            raise ValueError("density does not match the measurement sphere")
    vals = matrix.entries @ (matrix.sphere.weights * density.values)
    return BoundaryDensity(matrix.sphere, vals)


def near_op_norm(n1: NearFieldMatrix, n2: NearFieldMatrix | None = None) -> float:
    """Operator norm of N_1 - N_2 as a map of L^2 of the sphere.

    Equals the largest singular value of W^(1/2) (N_1 - N_2) W^(1/2) with W
    the diagonal quadrature weights; pass a single matrix to take the norm
    of the operator itself (or of an already-assembled difference).
    """
    delta = n1.entries
    if n2 is not None:
        _same_sphere(n1, n2)
        delta = delta - n2.entries
    root_w = np.sqrt(n1.sphere.weights)
    weighted = root_w[:, None] * delta * root_w[None, :]
    return float(np.linalg.svd(weighted, compute_uv=False)[0])


def data_functional(
    n1: NearFieldMatrix,
    n2: NearFieldMatrix | None,
    f1: BoundaryDensity,
    f2: BoundaryDensity,
) -> complex:
    """Boundary pairing int_dB ((N_1 - N_2) f_2) f_1 ds, bilinear in both.

    No complex conjugation anywhere: the identity relating this pairing to
    the volume integral of the potential difference holds for the bilinear
    form.  Pass ``n2=None`` when ``n1`` already holds an assembled
    difference.
    """
    delta = n1.entries
    if n2 is not None:
        _same_sphere(n1, n2)
        delta = delta - n2.entries
    w = n1.sphere.weights
    return complex((w * f1.values) @ delta @ (w * f2.values))


def volume_pairing(
    pair1: PotentialPair,
    pair2: PotentialPair,
    k: float,
    f1: BoundaryDensity,
    f2: BoundaryDensity,
    tol: float = 1e-8,
    **solver_options,
) -> complex:
    """Volume side of the boundary-data identity.

    Computes int P u_1 u_2 dx with the first-order difference operator

        P u = i div(A u) + i A . grad u + (|A_2|^2 - |A_1|^2 + q_2 - q_1) u,
        A = A_2 - A_1,

    where u_1 is the total field of the single-layer incident field S f_1
    solved with the sign-flipped vector potential -A_1 (the transposed
    operator), and u_2 is the total field of S f_2 under (A_2, q_2).  For
    admissible pairs this equals ``data_functional(N_1, N_2, f1, f2)``.
    """
    grid = pair1.grid
    if not np.isclose(pair1.support_radius, pair2.support_radius) or (
        pair2.grid is not grid and pair2.grid != grid
    ):
        raise ValueError("volume pairing needs pairs on a common support grid")
    s1 = ForwardSolver(pair1, k, a_sign=-1.0, tol=tol, **solver_options)
    s2 = ForwardSolver(pair2, k, a_sign=+1.0, tol=tol, **solver_options)
    sol1 = s1.solve(single_layer(k, f1))
    sol2 = s2.solve(single_layer(k, f2))

    diff_a = pair2.a_field.values - pair1.a_field.values
    diff_pair = make_pair(
        grid,
        a_field=VectorField3(grid, diff_a),
        support_radius=pair1.support_radius,
    )
    sd = ForwardSolver(diff_pair, k, tol=tol)
    u1, grad_u1 = sol1.u_support, sol1.grad_u_support
    mask = s1.support_mask
    coeff = (
        (np.abs(pair2.a_field.values) ** 2).sum(axis=0)[mask]
        - (np.abs(pair1.a_field.values) ** 2).sum(axis=0)[mask]
        + pair2.q_field.values[mask]
        - pair1.q_field.values[mask]
    )
    a_dot_grad = np.einsum("cp,cp->p", sd.a_support, grad_u1)
    p_u1 = 1j * sd._div_of_a_product(u1) + 1j * a_dot_grad + coeff * u1
    return complex(grid.cell_volume * np.sum(p_u1 * sol2.u_support))
