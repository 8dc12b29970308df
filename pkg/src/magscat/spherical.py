"""Far-field coefficient tables and translations between data representations.

Scattering data comes in two equivalent forms: the near-field matrix of
point-source scattered fields on a sphere, and the far-field pattern
u_inf(obs, inc) over pairs of directions.  This module connects them:

* :func:`far_coefficients` expands u_inf in a double spherical-harmonic
  basis (coefficients mu, conjugated harmonics in both slots),
* :func:`f_norm` evaluates the exponentially weighted norm
  sqrt(sum ((2*l1+1)/(e*k*a))^(2*l1) ((2*l2+1)/(e*k*a))^(2*l2) |mu|^2),
* :func:`near_from_far` sums the Hankel series that reproduces point-source
  scattered fields outside the ball |x| < a from the mu table alone,
* :func:`exterior_dirichlet` solves the radiating exterior problem with
  given trace on a sphere and returns the trace of its normal derivative,
* :func:`nearfield_farfield_gap` evaluates both sides of the Lipschitz
  bound ||N1 - N2|| <= alpha^2 k^2/(4 pi) ||u1_inf - u2_inf||_F.

The series conventions (conjugations, the i^(l1-l2) phase, the -k^2/(4 pi)
prefactor) are pinned jointly by the Funk-Hecke, addition-formula and
near-from-far tests; changing any one of them breaks those checks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .boundary import NearFieldMatrix, near_op_norm
from .forward import ForwardSolver, PlaneWave
from .potentials import PotentialPair
from .special import lm_pairs, spherical_h1, spherical_h1_derivative, ylm
from .sphere import (
    BoundaryDensity,
    SphereGrid,
    sphere_l2_norm,
    synth_ylm,
    ylm_table,
)

__all__ = [
    "FarFieldCoefficients",
    "far_coefficients",
    "far_field_table",
    "f_norm",
    "near_from_far",
    "ExteriorSolution",
    "exterior_dirichlet",
    "hankel_envelope_constant",
    "nearfield_farfield_gap",
    "save_far_coefficients",
    "load_far_coefficients",
]


@dataclass(frozen=True)
class FarFieldCoefficients:
    """Double spherical-harmonic coefficients of a far-field pattern.

    Attributes
    ----------
    l_max : int
        Mode limit; both indices run over all (l, m) with l <= l_max.
    mu : ndarray
        Complex table of shape (n_lm, n_lm); rows index the observation
        harmonic (l1, m1), columns the incidence harmonic (l2, m2), both in
        :func:`magscat.special.lm_pairs` order.
    k : float
        Wavenumber.
    a : float
        Radius of the reference ball containing the scatterer; enters the
        weighted norm and the Hankel series only through k*a.
    """

    l_max: int
    mu: np.ndarray
    k: float
    a: float

    def __post_init__(self):
        n_lm = (self.l_max + 1) ** 2
        mu = np.asarray(self.mu, dtype=complex)
        if mu.shape != (n_lm, n_lm):
            raise ValueError("mu must be square over all (l, m) with l <= l_max")
        object.__setattr__(self, "mu", mu)
        if self.k <= 0 or self.a <= 0:
            raise ValueError("k and a must be positive")

    @property
    def pairs(self) -> list:
        return lm_pairs(self.l_max)


def _direction_quadrature(sphere: SphereGrid):
    """Unit directions and unit-sphere weights of a sphere quadrature."""
    return sphere.points / sphere.radius, sphere.weights / sphere.radius**2


def _check_degree(sphere: SphereGrid, l_max: int) -> None:
    # Products of two degree-l_max harmonics must be integrated exactly:
    # Gauss-Legendre needs n_theta >= l_max + 1, the uniform azimuth rule
    # n_phi >= 2*l_max + 1.
    if sphere.n_theta < l_max + 1 or sphere.n_phi < 2 * l_max + 1:
        raise ValueError(
            "sphere quadrature degree too low for l_max = "
            f"{l_max}: need n_theta >= {l_max + 1} and n_phi >= {2 * l_max + 1}"
        )


def far_coefficients(samples, l_max: int, sphere: SphereGrid, k: float, a: float) -> FarFieldCoefficients:
    """Expand a far-field pattern in conjugated harmonics on both slots.

    mu[(l1,m1),(l2,m2)] = int int u_inf(obs, inc) conj(Y_l1^m1(obs))
    conj(Y_l2^m2(inc)) ds(obs) ds(inc) over the unit sphere in both slots.

    Parameters
    ----------
    samples : ndarray or callable
        Either the matrix u_inf[i, j] = u_inf(obs_i, inc_j) over the node
        directions of `sphere`, or a callable mapping two (size, 3) arrays
        of unit directions to that matrix.
    l_max : int
        Mode limit; the quadrature must integrate degree 2*l_max exactly.
    sphere : SphereGrid
        Direction quadrature (its radius is irrelevant; nodes are
        normalized to unit directions).
    k, a : float
        Physics parameters stored alongside the table.
    """
    _check_degree(sphere, l_max)
    directions, weights = _direction_quadrature(sphere)
    if callable(samples):
        samples = samples(directions, directions)
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (sphere.size, sphere.size):
        raise ValueError("far-field samples must be square over the sphere nodes")
    projector = ylm_table(sphere, l_max).conj() * weights
    mu = projector @ samples @ projector.T
    return FarFieldCoefficients(l_max=l_max, mu=mu, k=k, a=a)


def far_field_table(
    pair: PotentialPair, k: float, sphere: SphereGrid, tol: float = 1e-8, **solver_options
) -> np.ndarray:
    """Far-field pattern matrix over a direction quadrature, one solve per column.

    Entry [i, j] is the far field observed in direction i for an incident
    plane wave travelling along direction j.  The result is the `samples`
    input of :func:`far_coefficients`.
    """
    directions = sphere.normals
    solver = ForwardSolver(pair, k, tol=tol, **solver_options)
    table = np.empty((sphere.size, sphere.size), dtype=complex)
    for j in range(sphere.size):
        solution = solver.solve(PlaneWave(k, directions[j]))
        if solution.gmres_info != 0:
            raise RuntimeError(f"forward solve failed for incidence node {j}")
        table[:, j] = solution.far_field(directions)
    return table


def _pair_weights(l_max: int, k: float, a: float) -> np.ndarray:
    """Per-(l, m) weight ((2l+1)/(e k a))^(2l) of the far-field norm."""
    ls = np.array([l for l, _ in lm_pairs(l_max)], dtype=float)
    return ((2.0 * ls + 1.0) / (np.e * k * a)) ** (2.0 * ls)


def f_norm(coefficients: FarFieldCoefficients, l_max: int | None = None) -> float:
    """Exponentially weighted far-field norm, optionally truncated below l_max.

    The partial sums are nondecreasing in l_max, so the optional truncation
    gives the monotone saturation diagnostic for the mode limit.
    """
    if l_max is None:
        l_max = coefficients.l_max
    if l_max > coefficients.l_max:
        raise ValueError("cannot extend a table beyond its l_max")
    w = _pair_weights(coefficients.l_max, coefficients.k, coefficients.a)
    keep = np.array([l <= l_max for l, _ in coefficients.pairs])
    wk = w * keep
    total = wk @ (np.abs(coefficients.mu) ** 2) @ wk
    return float(np.sqrt(total))


def _direction_angles(x: np.ndarray):
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("direction undefined at the origin")
    theta = np.arccos(np.clip(x[2] / r, -1.0, 1.0))
    phi = np.arctan2(x[1], x[0])
    return r, theta, phi


def near_from_far(coefficients: FarFieldCoefficients, x, y) -> complex:
    """Point-source scattered field outside |x| = a summed from the mu table.

    u_s(x, y) = -k^2/(4 pi) sum i^(l1 - l2) mu[(l1,m1),(l2,m2)]
    h_l1(k|x|) h_l2(k|y|) Y_l1^m1(x^) Y_l2^m2(y^), the receiver at x and the
    point source at y, both with |.| >= a.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = coefficients.k
    rx, tx, px = _direction_angles(x)
    ry, ty, py = _direction_angles(y)
    if rx < coefficients.a * (1.0 - 1e-12) or ry < coefficients.a * (1.0 - 1e-12):
        raise ValueError("near_from_far needs |x|, |y| >= a")
    pairs = coefficients.pairs
    left = np.array(
        [(1j**l) * spherical_h1(l, k * rx) * ylm(l, m, tx, px) for l, m in pairs]
    )
    right = np.array(
        [(1j ** (-l)) * spherical_h1(l, k * ry) * ylm(l, m, ty, py) for l, m in pairs]
    )
    return complex(-(k**2) / (4.0 * np.pi) * (left @ coefficients.mu @ right))


@dataclass(frozen=True)
class ExteriorSolution:
    """Radiating solution outside a sphere, expanded in outgoing modes.

    u(r x^) = sum c_lm (h_l(k r) / h_l(k a)) Y_l^m(x^) for r >= a, where the
    c_lm are the harmonic coefficients of the boundary trace.
    """

    sphere: SphereGrid
    k: float
    l_max: int
    coefficients: np.ndarray

    def _radial(self, r: np.ndarray, derivative: bool = False) -> np.ndarray:
        """Radial factors per l, shape (l_max + 1, len(r))."""
        ka = self.k * self.sphere.radius
        rows = []
        for l in range(self.l_max + 1):
            num = (
                self.k * spherical_h1_derivative(l, self.k * r)
                if derivative
                else spherical_h1(l, self.k * r)
            )
            rows.append(num / spherical_h1(l, ka))
        return np.asarray(rows)

    def _sum(self, points: np.ndarray, derivative: bool) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(points, axis=1)
        if np.any(r < self.sphere.radius * (1.0 - 1e-12)):
            raise ValueError("exterior evaluation needs |x| >= sphere radius")
        theta = np.arccos(np.clip(points[:, 2] / r, -1.0, 1.0))
        phi = np.arctan2(points[:, 1], points[:, 0])
        radial = self._radial(r, derivative=derivative)
        out = np.zeros(len(points), dtype=complex)
        for c, (l, m) in zip(self.coefficients, lm_pairs(self.l_max)):
            out += c * radial[l] * ylm(l, m, theta, phi)
        return out

    def field(self, points: np.ndarray) -> np.ndarray:
        """Values u(x) at exterior points, shape (m,)."""
        return self._sum(points, derivative=False)

    def radial_derivative(self, points: np.ndarray) -> np.ndarray:
        """Values of the radial derivative at exterior points."""
        return self._sum(points, derivative=True)

    @property
    def normal_derivative(self) -> BoundaryDensity:
        """Trace of the radial derivative on the expansion sphere."""
        ka = self.k * self.sphere.radius
        factors = np.array(
            [
                self.k * spherical_h1_derivative(l, ka) / spherical_h1(l, ka)
                for l, _ in lm_pairs(self.l_max)
            ]
        )
        values = synth_ylm(self.sphere, self.coefficients * factors)
        return BoundaryDensity(self.sphere, values)


def exterior_dirichlet(
    trace: BoundaryDensity,
    k: float,
    l_max: int | None = None,
    tail_tol: float = 1e-8,
) -> tuple:
    """Radiating exterior solution with given sphere trace.

    Expands the trace to degree l_max (default: the largest degree the
    sphere quadrature integrates exactly) and returns the pair
    (solution, normal-derivative trace).  The expansion must actually
    represent the data: a relative resynthesis residual above `tail_tol`
    raises, because the truncated exterior solution would not attain the
    requested boundary values.
    """
    sphere = trace.sphere
    if l_max is None:
        l_max = sphere.n_theta - 1
    _check_degree(sphere, l_max)
    # project_ylm would recompute the table; do both steps with one table.
    table = ylm_table(sphere, l_max)
    coeffs = (table.conj() * (sphere.weights * trace.values)).sum(axis=1) / sphere.radius**2
    resynth = coeffs @ table
    scale = sphere_l2_norm(sphere, trace.values)
    tail = sphere_l2_norm(sphere, trace.values - resynth)
    if scale > 0 and tail > tail_tol * scale:
        raise ValueError(
            f"boundary data has relative spectral tail {tail / scale:.2e} beyond "
            f"degree {l_max} (tolerance {tail_tol:.1e})"
        )
    solution = ExteriorSolution(sphere=sphere, k=k, l_max=l_max, coefficients=coeffs)
    return solution, solution.normal_derivative


def hankel_envelope_constant(k: float, a: float, l_max: int) -> float:
    """Empirical constant alpha with |h_l(ka)| <= alpha ((2l+1)/(e k a))^l.

    Computed as the max over l <= l_max of |h_l(ka)| (e k a / (2l+1))^l; by
    construction the envelope bound holds with equality at the maximizing l.
    """
    ka = k * a
    ls = np.arange(l_max + 1)
    h = np.array([abs(spherical_h1(l, ka)) for l in ls])
    return float(np.max(h * (np.e * ka / (2 * ls + 1)) ** ls))


def nearfield_farfield_gap(
    n1: NearFieldMatrix,
    n2: NearFieldMatrix,
    c1: FarFieldCoefficients,
    c2: FarFieldCoefficients,
) -> tuple:
    """Both sides of ||N1 - N2|| <= alpha^2 k^2/(4 pi) ||u1_inf - u2_inf||_F.

    Returns (lhs, rhs): the operator-norm distance of the near-field
    matrices, and the weighted far-field distance times the empirical
    Hankel-envelope constant squared and k^2/(4 pi).
    """
    if (c1.l_max, c1.k, c1.a) != (c2.l_max, c2.k, c2.a):
        raise ValueError("far-field tables must share l_max, k and a")
    lhs = near_op_norm(n1, n2)
    alpha = hankel_envelope_constant(c1.k, c1.a, c1.l_max)
    rhs = alpha**2 * c1.k**2 / (4.0 * np.pi) * f_norm(replace(c1, mu=c1.mu - c2.mu))
    return lhs, rhs


def save_far_coefficients(path, coefficients: FarFieldCoefficients) -> None:
    """Write a mu table as CSV (l1,m1,l2,m2,re,im) with a JSON header line."""
    header = {"l_max": coefficients.l_max, "k": coefficients.k, "a": coefficients.a}
    pairs = coefficients.pairs
    with open(path, "w", newline="") as handle:
        handle.write("# " + json.dumps(header) + "\n")
        writer = csv.writer(handle)
        writer.writerow(["l1", "m1", "l2", "m2", "re", "im"])
        for p, (l1, m1) in enumerate(pairs):
            for q, (l2, m2) in enumerate(pairs):
                value = coefficients.mu[p, q]
                writer.writerow(
                    [l1, m1, l2, m2, repr(float(value.real)), repr(float(value.imag))]
                )


def load_far_coefficients(path) -> FarFieldCoefficients:
    """Read a mu table written by :func:`save_far_coefficients`."""
    with open(path, newline="") as handle:
        first = handle.readline()
        if not first.startswith("# "):
            raise ValueError("missing JSON header line")
        header = json.loads(first[2:])
        reader = csv.reader(handle)
        next(reader)  # column names
        l_max = int(header["l_max"])
        index = {pair: i for i, pair in enumerate(lm_pairs(l_max))}
        mu = np.zeros((len(index), len(index)), dtype=complex)
        for row in reader:
            l1, m1, l2, m2 = (int(v) for v in row[:4])
            mu[index[(l1, m1)], index[(l2, m2)]] = float(row[4]) + 1j * float(row[5])
    return FarFieldCoefficients(l_max=l_max, mu=mu, k=float(header["k"]), a=float(header["a"]))
