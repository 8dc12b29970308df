"""Quadrature grids and densities on the measurement sphere.

The sphere of radius a is discretized by a tensor rule: Gauss-Legendre in
cos(theta) times a uniform azimuth grid.  With n_theta polar nodes the rule
integrates spherical polynomials of degree <= 2*n_theta - 1 exactly, so
Y_l^m orthonormality holds exactly (up to roundoff) for l <= n_theta - 1
provided n_phi > 2*(n_theta - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .special import lm_pairs, ylm

__all__ = [
    "SphereGrid",
    "make_sphere",
    "BoundaryDensity",
    "sphere_integral",
    "sphere_inner",
    "sphere_l2_norm",
    "ylm_on_sphere",
    "ylm_table",
    "project_ylm",
    "synth_ylm",
]


@dataclass(frozen=True)
class SphereGrid:
    """Tensor quadrature grid on the sphere |x| = radius.

    Attributes
    ----------
    radius : float
        Sphere radius a.
    n_theta, n_phi : int
        Number of polar (Gauss-Legendre in cos theta) and azimuthal
        (uniform) nodes.
    """

    radius: float
    n_theta: int
    n_phi: int

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.n_theta < 2 or self.n_phi < 4:
            raise ValueError("need at least 2 polar and 4 azimuthal nodes")

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    def _nodes(self):
        mu, w_mu = np.polynomial.legendre.leggauss(self.n_theta)
        theta = np.arccos(mu)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        return theta, w_mu, phi

    @property
    def angles(self) -> tuple:
        """(theta, phi) arrays of length size, flattened theta-major."""
        theta, _, phi = self._nodes()
        T, P = np.meshgrid(theta, phi, indexing="ij")
        return T.ravel(), P.ravel()

    @property
    def weights(self) -> np.ndarray:
        """Surface quadrature weights including the radius^2 area factor."""
        _, w_mu, _ = self._nodes()
        w = np.repeat(w_mu, self.n_phi) * (2.0 * np.pi / self.n_phi)
        return self.radius**2 * w

    @property
    def points(self) -> np.ndarray:
        """Cartesian node coordinates, shape (size, 3)."""
        theta, phi = self.angles
        st = np.sin(theta)
        return self.radius * np.stack(
            [st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1
        )

    @property
    def normals(self) -> np.ndarray:
        """Outward unit normals at the nodes."""
        return self.points / self.radius


def make_sphere(radius: float, n_theta: int = 16, n_phi: int = 32) -> SphereGrid:
    """Build the default measurement sphere quadrature."""
    return SphereGrid(radius=radius, n_theta=n_theta, n_phi=n_phi)


@dataclass
class BoundaryDensity:
    """Complex density sampled at the nodes of a :class:`SphereGrid`."""

    sphere: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.sphere.size,):
            raise ValueError("density values must match sphere size")


def sphere_integral(sphere: SphereGrid, values: np.ndarray) -> complex:
    """Surface integral of nodal values."""
    return complex((sphere.weights * values).sum())


def sphere_inner(
    sphere: SphereGrid, f: np.ndarray, g: np.ndarray, conjugate: bool = True
) -> complex:
    """Quadrature pairing int f * g ds (conjugating g by default).

    The bilinear (non-conjugated) form is the one entering reciprocity and
    the boundary data functional; the sesquilinear form is the L^2 inner
    product used for harmonic expansion.
    """
    gg = np.conj(g) if conjugate else g
    return complex((sphere.weights * f * gg).sum())


def sphere_l2_norm(sphere: SphereGrid, f: np.ndarray) -> float:
    """L^2(sphere) norm of nodal values."""
    return float(np.sqrt((sphere.weights * np.abs(f) ** 2).sum().real))


def ylm_on_sphere(sphere: SphereGrid, l: int, m: int) -> np.ndarray:
    """Samples of Y_l^m at the sphere nodes."""
    theta, phi = sphere.angles
    return ylm(l, m, theta, phi)


# Tables depend only on the angular layout (n_theta, n_phi, lmax), never on
# the radius, so repeated boundary expansions on the same quadrature reuse
# one table.  Bounded FIFO cache; entries are treated as read-only.
_YLM_CACHE: dict = {}
_YLM_CACHE_BUDGET = 16_000_000  # total cached complex entries


def ylm_table(sphere: SphereGrid, lmax: int) -> np.ndarray:
    """Stacked samples of all Y_l^m with l <= lmax, shape (n_lm, size).

    Rows follow :func:`magscat.special.lm_pairs` ordering.  The returned
    array is cached per angular layout and must not be written to.
    """
    key = (sphere.n_theta, sphere.n_phi, lmax)
    table = _YLM_CACHE.get(key)
    if table is None:
        theta, phi = sphere.angles
        table = np.stack([ylm(l, m, theta, phi) for l, m in lm_pairs(lmax)])
        table.setflags(write=False)
        while (
            _YLM_CACHE
            and sum(t.size for t in _YLM_CACHE.values()) + table.size
            > _YLM_CACHE_BUDGET
        ):
            _YLM_CACHE.pop(next(iter(_YLM_CACHE)))
        _YLM_CACHE[key] = table
    return table


def project_ylm(sphere: SphereGrid, values: np.ndarray, lmax: int) -> np.ndarray:
    """Expansion coefficients c_lm = int f conj(Y_l^m) ds / radius^2.

    The radius^2 division makes the coefficients those of the *unit-sphere*
    expansion of f restricted to directions, i.e. f(a x^) = sum c_lm Y_lm(x^)
    when f is a spherical polynomial of degree <= n_theta - 1.
    """
    table = ylm_table(sphere, lmax)
    return (table.conj() * (sphere.weights * values)).sum(axis=1) / sphere.radius**2


def synth_ylm(sphere: SphereGrid, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate sum c_lm Y_lm at the sphere nodes (inverse of project_ylm)."""
    n_lm = len(coeffs)
    lmax = int(round(np.sqrt(n_lm))) - 1
    if (lmax + 1) ** 2 != n_lm:
        raise ValueError("coefficient vector length must be (lmax+1)^2")
    table = ylm_table(sphere, lmax)
    return coeffs @ table
