"""Complex-exponential probe construction for near-field pairings.

Probes are exponentially growing fields u = e^{ix.rho} e^{iphi} with a
complex wave vector rho satisfying rho.rho = 0 (bilinear dot), so the
leading exponential is harmonic.  The phase phi corrects for a magnetic
potential A through the transport equation omega.grad(phi) = +/- omega.A,
solved spectrally by :func:`ninv_omega`.  A probe pair (u1, u2) shares a
target frequency xi = rho1 + rho2, so the product u1*u2 oscillates like
e^{ix.xi} and pairings against potential differences isolate single
Fourier modes.

The boundary densities f_j = dnu(u_j)^- - dnu(u_j)^+ (interior normal
derivative minus that of the radiating extension of the trace) feed the
near-field pairings in :mod:`magscat.boundary`.
"""

import json
from dataclasses import dataclass

import numpy as np

from .grid import (
    ScalarField,
    SpectralField,
    VectorField3,
    _fftn,
    _ifftn,
    forward_transform,
    gradient,
    idft_at,
    inverse_transform,
    sup_norm,
)
from .sphere import BoundaryDensity, sphere_l2_norm
from .spherical import exterior_dirichlet

__all__ = [
    "DirectionFrame",
    "build_frame",
    "ninv_omega",
    "retained_projection",
    "CGOProbe",
    "build_probe",
    "ProbeDensities",
    "boundary_densities",
    "ProbeDescriptor",
    "probe_from_descriptor",
]


@dataclass(frozen=True, eq=False)
class DirectionFrame:
    """Mutually orthogonal triple (xi, omega1, omega2) for a target frequency.

    ``omega1`` and ``omega2`` are real unit vectors orthogonal to each other
    and to ``xi``.  ``component_pair`` records the axis pair (j, l) that
    generated ``omega2`` and ``sign`` the orientation of ``omega1``; both are
    bookkeeping for descriptor round-trips.
    """

    xi: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    component_pair: tuple
    sign: float = 1.0

    @property
    def omega(self) -> np.ndarray:
        """The complex direction omega1 + i*omega2."""
        return self.omega1 + 1j * self.omega2

    @property
    def flipped(self) -> "DirectionFrame":
        """The same frame with omega1 negated (omega2 and xi unchanged)."""
        return DirectionFrame(
            xi=self.xi,
            omega1=-self.omega1,
            omega2=self.omega2,
            component_pair=self.component_pair,
            sign=-self.sign,
        )

    def rho_pair(self, s: float, k: float = 0.0) -> tuple:
        """Complex wave vectors (rho1, rho2) of magnitude scale s.

        rho1 = s*(i*omega2 + xi/(2s) - c*omega1) and
        rho2 = s*(-i*omega2 + xi/(2s) + c*omega1) with
        c = sqrt(1 - |xi|^2/(4s^2) + k^2/s^2), so that
        rho1.rho1 = rho2.rho2 = k^2 and rho1 + rho2 = xi.  With the default
        k = 0 the vectors are null and the carrier exponential is harmonic;
        a positive k tilts them so the carrier solves the Helmholtz
        equation at that wavenumber exactly, which removes the k^2 part of
        the remainder a null carrier would leave behind.
        """
        xi_sq = float(self.xi @ self.xi)
        if s <= 0.5 * np.sqrt(xi_sq):
            raise ValueError("probe magnitude s must exceed |xi|/2")
        c = np.sqrt(1.0 - xi_sq / (4.0 * s * s) + (k * k) / (s * s))
        shift = self.xi / (2.0 * s)
        rho1 = s * (1j * self.omega2 + shift - c * self.omega1)
        rho2 = s * (-1j * self.omega2 + shift + c * self.omega1)
        return rho1, rho2


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def build_frame(xi, j: int, l: int, sign: float = 1.0) -> DirectionFrame:
    """Build the orthogonal frame for frequency ``xi`` from axis pair (j, l).

    omega2 is the unit vector along xi_j e_l - xi_l e_j, which is orthogonal
    to xi by construction; omega1 completes the triple as xi x omega2
    normalized.  Raises ValueError when xi lies on the (j, l) degenerate
    plane (xi_j = xi_l = 0), where this choice collapses; callers should
    pick another component pair.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (3,):
        raise ValueError("xi must be a 3-vector")
    if j == l or not (0 <= j < 3 and 0 <= l < 3):
        raise ValueError("component pair (j, l) must be two distinct axes")
    w = np.zeros(3)
    w[l] = xi[j]
    w[j] = -xi[l]
    scale = max(1.0, float(np.linalg.norm(xi)))
    if np.linalg.norm(w) <= 1e-14 * scale:
        raise ValueError(
            "xi is degenerate for component pair (%d, %d); pick another pair" % (j, l)
        )
    omega2 = _unit(w)
    omega1 = float(sign) * _unit(np.cross(xi, omega2))
    frame = DirectionFrame(
        xi=xi, omega1=omega1, omega2=omega2, component_pair=(j, l), sign=float(sign)
    )
    checks = (
        abs(frame.omega1 @ frame.omega2),
        abs(frame.omega1 @ xi),
        abs(frame.omega2 @ xi),
        abs(frame.omega1 @ frame.omega1 - 1.0),
        abs(frame.omega2 @ frame.omega2 - 1.0),
    )
    if max(checks) > 1e-12 * scale:
        raise ValueError("frame orthogonality failed; xi too close to degenerate")
    return frame


def _directional_symbol(grid, omega) -> np.ndarray:
    # Spectral symbol of omega.grad in the raw DFT layout (Nyquist zeroed,
    # matching the grid's derivative convention).
    omega = np.asarray(omega)
    return sum(omega[c] * grid._deriv_factor(c) for c in range(3))


def ninv_omega(g: ScalarField, omega, eps_rel: float = 1e-8) -> ScalarField:
    """Invert omega.grad for a complex direction omega.

    Returns phi with omega.grad(phi) = g exactly on the retained modes; dual
    modes where the symbol magnitude |omega.xi| falls below
    ``eps_rel * max|omega.xi|`` are zeroed (the zero frequency always is).
    ``omega`` may be any complex 3-vector whose symbol does not vanish
    identically.
    """
    sym = _directional_symbol(g.grid, omega)
    mag = np.abs(sym)
    keep = mag > eps_rel * mag.max()
    inv = np.zeros_like(sym)
    inv[keep] = 1.0 / sym[keep]
    return ScalarField(g.grid, _fftn(_ifftn(g.values) * inv))


def retained_projection(g: ScalarField, omega, eps_rel: float = 1e-8) -> tuple:
    """Project ``g`` onto the modes :func:`ninv_omega` retains for ``omega``.

    Returns ``(projected field, dropped mode count)``; the projection is the
    exact right-hand side reproduced by omega.grad(ninv_omega(g)).
    """
    sym = _directional_symbol(g.grid, omega)
    mag = np.abs(sym)
    keep = mag > eps_rel * mag.max()
    values = _fftn(_ifftn(g.values) * keep)
    return ScalarField(g.grid, values), int(keep.size - keep.sum())


class CGOProbe:
    """A probe pair u_j = e^{ix.rho_j} e^{iphi_j} with analytic gradients.

    ``phi1`` solves omega1*.grad(phi1) = omega1*.A1 and ``phi2`` solves
    omega2*.grad(phi2) = -omega2*.A2 with omega_j* = rho_j / s, so that u1
    is a leading-order solution for the sign-flipped potential -A1 and u2
    for +A2.  Fields and gradients evaluate anywhere through the closed
    exponential form times the spectrally interpolated phase.
    """

    def __init__(
        self, frame, s, rho1, rho2, phi1, phi2, dropped_modes, transport_residuals, k=0.0
    ):
        self.frame = frame
        self.s = float(s)
        self.k = float(k)
        self.rho1 = rho1
        self.rho2 = rho2
        self.phi1 = phi1
        self.phi2 = phi2
        self.dropped_modes = dropped_modes
        self.transport_residuals = transport_residuals
        self._phase_spectra = {}

    @property
    def grid(self):
        return self.phi1.grid

    @property
    def xi(self) -> np.ndarray:
        return self.frame.xi

    def _rho(self, j: int) -> np.ndarray:
        if j not in (1, 2):
            raise ValueError("probe index must be 1 or 2")
        return self.rho1 if j == 1 else self.rho2

    def _phi(self, j: int) -> ScalarField:
        return self.phi1 if j == 1 else self.phi2

    def _spectra(self, j: int) -> tuple:
        # (phi_hat, three gradient spectra), built once per probe index.  The
        # Nyquist planes are zeroed so the phase interpolant agrees with the
        # gradient spectra, which drop them through the derivative symbol.
        if j not in self._phase_spectra:
            values = forward_transform(self._phi(j)).values.copy()
            nyq = self.grid.n // 2
            values[nyq, :, :] = 0.0
            values[:, nyq, :] = 0.0
            values[:, :, nyq] = 0.0
            phi_hat = SpectralField(self.grid, values)
            grad_hats = [
                SpectralField(self.grid, values * self.grid._deriv_factor(axis))
                for axis in range(3)
            ]
            self._phase_spectra[j] = (phi_hat, grad_hats)
        return self._phase_spectra[j]

    def phase(self, j: int, points: np.ndarray, mode_tol: float = 1e-13) -> np.ndarray:
        """phi_j at arbitrary points via spectral interpolation."""
        self._rho(j)
        phi_hat, _ = self._spectra(j)
        if not np.any(phi_hat.values):
            return np.zeros(np.atleast_2d(points).shape[0], dtype=complex)
        return idft_at(phi_hat, points, mode_tol=mode_tol)

    def phase_gradient(self, j: int, points: np.ndarray, mode_tol: float = 1e-13) -> np.ndarray:
        """grad(phi_j) at arbitrary points, shape (m, 3)."""
        self._rho(j)
        _, grad_hats = self._spectra(j)
        m = np.atleast_2d(points).shape[0]
        out = np.zeros((m, 3), dtype=complex)
        for axis in range(3):
            if np.any(grad_hats[axis].values):
                out[:, axis] = idft_at(grad_hats[axis], points, mode_tol=mode_tol)
        return out

    def field(self, j: int, points: np.ndarray) -> np.ndarray:
        """u_j = e^{ix.rho_j} e^{iphi_j(x)} at the given points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        carrier = np.exp(1j * (points @ self._rho(j)))
        return carrier * np.exp(1j * self.phase(j, points))

    def gradient(self, j: int, points: np.ndarray) -> np.ndarray:
        """grad(u_j) = i(rho_j + grad phi_j) u_j at the given points, (m, 3)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = self.field(j, points)
        total = self._rho(j)[None, :] + self.phase_gradient(j, points)
        return 1j * total * u[:, None]

    def field_on_grid(self, j: int) -> ScalarField:
        """u_j sampled on the grid nodes (same interpolant as :meth:`field`)."""
        g = self.grid
        x1, x2, x3 = g.coordinate_arrays()
        rho = self._rho(j)
        carrier = np.exp(1j * (x1 * rho[0] + x2 * rho[1] + x3 * rho[2]))
        phi_hat, _ = self._spectra(j)
        phase = inverse_transform(phi_hat).values
        return ScalarField(g, carrier * np.exp(1j * phase))

    def product_on_grid(self) -> ScalarField:
        """u1 * u2 on grid nodes; oscillates like e^{ix.xi}."""
        u1 = self.field_on_grid(1)
        u2 = self.field_on_grid(2)
        return ScalarField(self.grid, u1.values * u2.values)

    def descriptor(self) -> "ProbeDescriptor":
        j, l = self.frame.component_pair
        return ProbeDescriptor(
            xi=tuple(float(c) for c in self.frame.xi),
            j=int(j),
            l=int(l),
            s=self.s,
            sign=float(self.frame.sign),
            k=self.k,
        )


def _transport_residual(phi: ScalarField, omega_star, rhs: ScalarField) -> float:
    grad_phi = gradient(phi)
    along = sum(omega_star[c] * grad_phi.values[c] for c in range(3))
    return float(np.abs(along - rhs.values).max())


def build_probe(
    a1: VectorField3,
    a2: VectorField3,
    frame: DirectionFrame,
    s: float,
    s_min: float = 2.0,
    transport_tol: float = 1e-6,
    eps_rel: float = 1e-8,
    k: float = 0.0,
) -> CGOProbe:
    """Construct the probe pair for potentials (A1, A2) at magnitude s.

    Solves the transport equations phi1: omega1*.grad(phi1) = omega1*.A1 and
    phi2: omega2*.grad(phi2) = -omega2*.A2, then verifies the algebraic
    invariants (rho.rho = k^2, rho1 + rho2 = xi) and the transport residuals
    against ``transport_tol * sup|A_j|``.  Raises RuntimeError when a
    residual exceeds the gate (grid too coarse for this potential, or the
    potential has nonzero mean).  A nonzero ``k`` tilts the wave vectors so
    the carrier solves the Helmholtz equation at that wavenumber (see
    :meth:`DirectionFrame.rho_pair`).
    """
    if a1.grid is not a2.grid and a1.grid != a2.grid:
        raise ValueError("both potentials must live on the same grid")
    xi_norm = float(np.linalg.norm(frame.xi))
    if s < s_min or s <= 0.5 * xi_norm:
        raise ValueError("need s >= s_min and s > |xi|/2 (got s=%g)" % s)
    rho1, rho2 = frame.rho_pair(s, k=k)
    checks = (
        abs(rho1 @ rho1 - k * k),
        abs(rho2 @ rho2 - k * k),
        float(np.abs(rho1 + rho2 - frame.xi).max()),
    )
    tol = 1e-12 * max(1.0, s * s)
    if max(checks) > tol:
        raise RuntimeError("wave-vector algebra failed construction checks")

    grid = a1.grid
    omega1_star = rho1 / s
    omega2_star = rho2 / s
    dropped = []
    residuals = []
    phases = []
    for omega_star, a_field, orient in ((omega1_star, a1, 1.0), (omega2_star, a2, -1.0)):
        rhs_values = orient * sum(omega_star[c] * a_field.values[c] for c in range(3))
        rhs = ScalarField(grid, rhs_values)
        phi = ninv_omega(rhs, omega_star, eps_rel=eps_rel)
        _, n_dropped = retained_projection(rhs, omega_star, eps_rel=eps_rel)
        a_sup = sup_norm(a_field)
        residual = _transport_residual(phi, omega_star, rhs)
        if a_sup > 0.0 and residual > transport_tol * a_sup:
            raise RuntimeError(
                "transport residual %.3e exceeds %.1e * sup|A| = %.3e; "
                "grid too coarse for this potential or A has nonzero mean"
                % (residual, transport_tol, transport_tol * a_sup)
            )
        dropped.append(n_dropped)
        residuals.append(residual)
        phases.append(phi)

    return CGOProbe(
        frame=frame,
        s=s,
        rho1=rho1,
        rho2=rho2,
        phi1=phases[0],
        phi2=phases[1],
        dropped_modes=tuple(dropped),
        transport_residuals=tuple(residuals),
        k=k,
    )


@dataclass
class ProbeDensities:
    """Boundary densities of a probe pair with their L^2(dB) norms."""

    f1: BoundaryDensity
    f2: BoundaryDensity
    norm1: float
    norm2: float


def boundary_densities(
    probe: CGOProbe,
    sphere,
    k: float,
    l_max: int = None,
    tail_tol: float = 1e-8,
) -> ProbeDensities:
    """Normal-derivative jump densities f_j = dnu(u_j)^- - dnu(u_j)^+ on ``sphere``.

    The interior normal derivative comes from the probe's analytic gradient;
    the exterior one from the radiating extension of the trace at wavenumber
    ``k`` (see :func:`magscat.spherical.exterior_dirichlet`).  Raises
    ValueError via the extension when the trace is not spectrally resolved
    on the sphere (probe too oscillatory: raise n_theta/l_max or lower s).
    """
    densities = []
    norms = []
    for j in (1, 2):
        trace = BoundaryDensity(sphere, probe.field(j, sphere.points))
        _, dnu_plus = exterior_dirichlet(trace, k, l_max=l_max, tail_tol=tail_tol)
        dnu_minus = np.einsum("mc,mc->m", probe.gradient(j, sphere.points), sphere.normals)
        f = BoundaryDensity(sphere, dnu_minus - dnu_plus.values)
        densities.append(f)
        norms.append(sphere_l2_norm(sphere, f.values))
    return ProbeDensities(densities[0], densities[1], norms[0], norms[1])


@dataclass(frozen=True)
class ProbeDescriptor:
    """JSON-serializable recipe (xi, j, l, s, sign, k) for rebuilding a probe."""

    xi: tuple
    j: int
    l: int
    s: float
    sign: float = 1.0
    k: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "xi": [float(c) for c in self.xi],
                "j": int(self.j),
                "l": int(self.l),
                "s": float(self.s),
                "sign": float(self.sign),
                "k": float(self.k),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ProbeDescriptor":
        data = json.loads(text)
        return cls(
            xi=tuple(float(c) for c in data["xi"]),
            j=int(data["j"]),
            l=int(data["l"]),
            s=float(data["s"]),
            sign=float(data.get("sign", 1.0)),
            k=float(data.get("k", 0.0)),
        )


def probe_from_descriptor(
    descriptor: ProbeDescriptor, a1: VectorField3, a2: VectorField3, **options
) -> CGOProbe:
    """Rebuild a probe from its descriptor and the two potentials."""
    frame = build_frame(descriptor.xi, descriptor.j, descriptor.l, sign=descriptor.sign)
    return build_probe(a1, a2, frame, descriptor.s, k=descriptor.k, **options)
