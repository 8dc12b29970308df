"""Forward scattering solver for the perturbed Helmholtz equation.

Solves (-Delta - Q + k^2 ... ) in integral form: the total field u = v + u^s
with incident field v satisfies the volume integral (Lippmann-Schwinger)
equation

    u(x) = v(x) + int Phi_k(x - y) (Q u)(y) dy,
    (Q w)(y) = i div(A) w + 2 i A . grad(w) - (|A|^2 + q) w,

with the outgoing kernel Phi_k(z) = exp(ik|z|)/(4 pi |z|).  Rather than u,
the solver's unknown is the contrast source J = Q u, supported in the
potential support ball, which satisfies J - Q(V J) = Q v.  The volume
potential V is applied spectrally with the closed-form symbol of the
radially truncated kernel; truncation at R_t = L makes V J *exact* (to
quadrature error) wherever |x| <= R_t - r_D, because no point of the
support ball sees either the truncation sphere or the periodic images.

Scattered fields at external points and far-field values are evaluated by
direct quadrature over J, which is spectrally accurate since the integrand
is smooth on the support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import BoxGrid, ScalarField, _fftn, _ifftn
from .potentials import PotentialPair

__all__ = [
    "greens_kernel",
    "truncated_kernel_symbol",
    "PlaneWave",
    "PointSource",
    "SingleLayerSource",
    "ForwardSolver",
    "ScatteringSolution",
]


def greens_kernel(k: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Outgoing fundamental solution exp(ik|x-y|)/(4 pi |x-y|), rowwise."""
    r = np.linalg.norm(np.atleast_2d(x) - np.atleast_2d(y), axis=-1)
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


def _phase_integral(a: np.ndarray, R: float) -> np.ndarray:
    """int_0^R exp(i a r) dr, stable for small |a| R.

    The closed form (exp(iaR) - 1)/(ia) is fine down to moderate arguments;
    below |a| R = 0.1 an 8-term Taylor series avoids the 0/0 and keeps both
    branches accurate to ~1e-14 at the crossover.
    """
    a = np.asarray(a, dtype=complex)
    out = np.empty(a.shape, dtype=complex)
    small = np.abs(a) * R < 0.1
    big = ~small
    ab = a[big]
    out[big] = (np.exp(1j * ab * R) - 1.0) / (1j * ab)
    asm = 1j * a[small]
    # sum_n (ia)^n R^(n+1) / (n+1)!
    acc = np.zeros(asm.shape, dtype=complex)
    term = np.ones_like(asm)  # (ia)^n / n!
    for n in range(8):
        acc += term * R ** (n + 1) / (n + 1)
        term = term * asm / (n + 1)
    out[small] = acc
    return out


def truncated_kernel_symbol(k: float, q: np.ndarray, R: float) -> np.ndarray:
    """Fourier transform of the radially truncated outgoing kernel.

    Returns int_{|y| <= R} exp(ik|y|)/(4 pi |y|) exp(i xi . y) dy as a
    function of q = |xi|.  The shell area 4 pi r^2 cancels the kernel's
    1/(4 pi r) and the sinc's 1/(qr), leaving

        (1 / q) int_0^R exp(ikr) sin(qr) dr,

    equal to [1 + e^{ikR}((ik/q) sin(qR) - cos(qR))]/(q^2 - k^2) away from
    the removable points; it is evaluated through the stable difference of
    phase integrals, with the exact q -> 0 limit int_0^R r exp(ikr) dr on
    the zero mode.
    """
    q = np.asarray(q, dtype=float)
    out = np.empty(q.shape, dtype=complex)
    zero = q < 1e-14
    pos = ~zero
    qp = q[pos]
    diff = _phase_integral(k + qp, R) - _phase_integral(k - qp, R)
    out[pos] = diff / (2j * qp)
    if zero.any():
        ik = 1j * k
        out[zero] = np.exp(ik * R) * (R / ik + 1.0 / k**2) - 1.0 / k**2
    return out


# ---------------------------------------------------------------------------
# incident fields
# ---------------------------------------------------------------------------

class PlaneWave:
    """Incident plane wave exp(i k d . x) with unit direction d."""

    def __init__(self, k: float, direction):
        d = np.asarray(direction, dtype=float)
        self.k = float(k)
        self.direction = d / np.linalg.norm(d)

    def field(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.exp(1j * self.k * points @ self.direction)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        vals = self.field(points)
        return 1j * self.k * self.direction[None, :] * vals[:, None]


class PointSource:
    """Incident field from a point source at y: Phi_k(x - y).

    Evaluations closer to the source than ``guard`` are zeroed; they only
    ever occur at grid nodes where the potentials vanish, and zeroing them
    keeps infinities out of the arithmetic.
    """

    def __init__(self, k: float, location, guard: float = 1e-8):
        self.k = float(k)
        self.location = np.asarray(location, dtype=float)
        self.guard = float(guard)

    def field(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        d = points - self.location
        r = np.linalg.norm(d, axis=-1)
        safe = np.maximum(r, self.guard)
        vals = np.exp(1j * self.k * safe) / (4.0 * np.pi * safe)
        vals[r < self.guard] = 0.0
        return vals

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        d = points - self.location
        r = np.linalg.norm(d, axis=-1)
        safe = np.maximum(r, self.guard)
        radial = (
            np.exp(1j * self.k * safe)
            / (4.0 * np.pi * safe)
            * (1j * self.k - 1.0 / safe)
        )
        radial[r < self.guard] = 0.0
        return radial[:, None] * d / safe[:, None]


class SingleLayerSource:
    """Single-layer field of a sphere density: v(x) = int Phi(x, y) h(y) ds(y).

    Quadrature form of the layer operator applied to a nodal density; used
    both as the incident field generated by a boundary density and as the
    trace operator S in the boundary data factorization.
    """

    def __init__(self, k: float, sphere, density: np.ndarray):
        self.k = float(k)
        self.sphere = sphere
        self.density = np.asarray(density, dtype=complex)
        if self.density.shape != (sphere.size,):
            raise ValueError("density shape does not match sphere")

    def field(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        w = self.sphere.weights * self.density
        out = np.zeros(len(points), dtype=complex)
        src = self.sphere.points
        for chunk in np.array_split(np.arange(len(points)), max(1, len(points) // 2048)):
            d = points[chunk, None, :] - src[None, :, :]
            r = np.linalg.norm(d, axis=-1)
            out[chunk] = (np.exp(1j * self.k * r) / (4.0 * np.pi * r)) @ w
        return out

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        w = self.sphere.weights * self.density
        out = np.zeros((len(points), 3), dtype=complex)
        src = self.sphere.points
        for chunk in np.array_split(np.arange(len(points)), max(1, len(points) // 2048)):
            d = points[chunk, None, :] - src[None, :, :]
            r = np.linalg.norm(d, axis=-1)
            radial = np.exp(1j * self.k * r) / (4.0 * np.pi * r) * (1j * self.k - 1.0 / r)
            out[chunk] = np.einsum("mj,mjc->mc", radial * w / r, d)
        return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass
class ScatteringSolution:
    """Result of a forward solve.

    Holds the contrast source J = Q u on the support nodes together with
    the total field and its gradient there, and evaluates scattered/far
    fields by quadrature over J.
    """

    solver: "ForwardSolver"
    current: np.ndarray          # J at support nodes
    u_support: np.ndarray        # total field at support nodes
    grad_u_support: np.ndarray   # (3, n_support)
    incident: object
    gmres_info: int
    relative_residual: float
    iterations: int

    def current_field(self) -> ScalarField:
        """Contrast source embedded on the full grid."""
        s = self.solver
        vals = np.zeros(s.grid.shape, dtype=complex)
        vals.reshape(-1)[s.support_flat] = self.current
        return ScalarField(s.grid, vals)

    def scattered_at(self, points: np.ndarray) -> np.ndarray:
        """u^s(x) = int Phi(x - y) J(y) dy for x away from the support."""
        s = self.solver
        points = np.atleast_2d(points)
        dmin = np.linalg.norm(
            points[:, None, :] - s.support_points[None, :, :], axis=-1
        ).min()
        if dmin < 2.0 * s.grid.spacing:
            raise ValueError(
                "scattered-field quadrature needs clearance from the support "
                f"(closest point at {dmin:.3g})"
            )
        kernel = greens_kernel(s.k, points[:, None, :], s.support_points[None, :, :])
        return s.grid.cell_volume * (kernel @ self.current)

    def far_field(self, directions: np.ndarray) -> np.ndarray:
        """Far-field pattern u^inf(x^) = (1/4pi) int e^{-ik x^.y} J(y) dy.

        Convention: u^s(x) = e^{ik|x|}/|x| * (u^inf(x^) + O(1/|x|)).
        """
        s = self.solver
        directions = np.atleast_2d(directions)
        phases = np.exp(-1j * s.k * directions @ s.support_points.T)
        return s.grid.cell_volume / (4.0 * np.pi) * (phases @ self.current)

    def total_field_on_grid(self) -> ScalarField:
        """u = v + V J on the full grid (incident part evaluated directly)."""
        s = self.solver
        v = self.incident.field(s.grid.points()).reshape(s.grid.shape)
        return ScalarField(s.grid, v + s.volume_potential(self.current_field().values))


class ForwardSolver:
    """Spectral volume-integral solver for one potential pair at fixed k.

    Parameters
    ----------
    pair : PotentialPair
        Potentials (A, q); the solve uses ``a_sign * A`` which callers use
        to run the transposed-operator solves required by reciprocity-type
        identities.
    k : float
        Wavenumber.
    a_sign : float
        +1 or -1; multiplies A (but not |A|^2, which is sign-invariant).
    truncation_radius : float or None
        Kernel truncation radius R_t; defaults to the box half-width L,
        which is exact for supports with r_D <= L/2.
    """

    def __init__(
        self,
        pair: PotentialPair,
        k: float,
        a_sign: float = 1.0,
        truncation_radius: float | None = None,
        tol: float = 1e-8,
        restart: int = 50,
        maxiter: int = 500,
    ):
        grid = pair.grid
        self.pair = pair
        self.grid = grid
        self.k = float(k)
        self.a_sign = float(a_sign)
        self.tol = float(tol)
        self.restart = int(restart)
        self.maxiter = int(maxiter)
        r_t = grid.half_width if truncation_radius is None else float(truncation_radius)
        if pair.support_radius > r_t / 2.0 + 1e-12 and truncation_radius is None:
            raise ValueError(
                "support radius exceeds half the box half-width; the truncated "
                "kernel would not be exact on the support"
            )
        self.truncation_radius = r_t

        # spectral machinery
        self.symbol = truncated_kernel_symbol(self.k, grid.xi_norm(), r_t)
        m = grid.axis_modes
        xi1d = grid.xi_spacing * np.where(m == -grid.n // 2, 0, m).astype(float)
        shapes = [(grid.n, 1, 1), (1, grid.n, 1), (1, 1, grid.n)]
        self._xi = [xi1d.reshape(s) for s in shapes]

        # support restriction
        mask = grid.ball_mask(pair.support_radius)
        self.support_mask = mask
        self.support_flat = np.flatnonzero(mask.reshape(-1))
        self.support_points = grid.points()[self.support_flat]
        self.n_support = len(self.support_flat)

        # potential data on the support
        a_vals = pair.a_field.values
        self.a_support = self.a_sign * a_vals[:, mask]
        self.q_support = pair.q_field.values[mask]
        self.a_sq_support = (np.abs(a_vals) ** 2).sum(axis=0)[mask]
        self.has_a = bool(np.abs(a_vals).max() > 0.0)

    # -- spectral applications -------------------------------------------

    def volume_potential(self, j_values: np.ndarray) -> np.ndarray:
        """V J on the full grid for full-grid J values."""
        jhat = _ifftn(j_values)
        return _fftn(self.symbol * jhat)

    def _vj_and_grad_on_support(self, j_support: np.ndarray):
        vals = np.zeros(self.grid.shape, dtype=complex)
        vals.reshape(-1)[self.support_flat] = j_support
        jhat = _ifftn(vals)
        sym = self.symbol * jhat
        vj = _fftn(sym).reshape(-1)[self.support_flat]
        grads = np.empty((3, self.n_support), dtype=complex)
        for c in range(3):
            grads[c] = (
                _fftn(-1j * self._xi[c] * sym).reshape(-1)[self.support_flat]
            )
        return vj, grads

    def _div_of_a_product(self, w: np.ndarray) -> np.ndarray:
        """Spectral div(A w) on the support for support values w."""
        acc = np.zeros(self.grid.shape, dtype=complex)
        buf = np.zeros(self.grid.shape, dtype=complex)
        for c in range(3):
            buf.reshape(-1)[self.support_flat] = self.a_support[c] * w
            acc += -1j * self._xi[c] * _ifftn(buf)
        return _fftn(acc).reshape(-1)[self.support_flat]

    def apply_q(self, w: np.ndarray, grad_w: np.ndarray) -> np.ndarray:
        """Q w = i div(A w) + i A . grad(w) - (|A|^2 + q) w on the support.

        The divergence is applied to the product A w rather than expanded by
        the Leibniz rule: the discrete spectral operators then satisfy the
        exact transpose identity Q_A^T = Q_{-A} (gradient skew-adjointness
        holds exactly, whereas the discrete Leibniz rule only holds up to
        aliasing), which is what makes reciprocity and the boundary-data
        orthogonality identity hold to solver tolerance instead of grid
        tolerance.
        """
        out = -(self.a_sq_support + self.q_support) * w
        if self.has_a:
            adotg = np.einsum("cp,cp->p", self.a_support, grad_w)
            out = out + 1j * self._div_of_a_product(w) + 1j * adotg
        return out

    # -- main solve --------------------------------------------------------

    def solve_current(self, rhs: np.ndarray):
        """Solve (I - Q V) J = rhs on the support nodes.

        Returns ``(j, info, relative_residual, iterations)``.  This is the
        raw fixed-point solve; ``solve`` wraps it for an incident field,
        and difference-mode near-field assembly feeds it the right-hand
        side (Q_1 - Q_2) u_2 directly.
        """
        count = {"n": 0}

        def matvec(j):
            count["n"] += 1
            vj, grads = self._vj_and_grad_on_support(j)
            return j - self.apply_q(vj, grads)

        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return np.zeros_like(rhs), 0, 0.0, 0
        op = LinearOperator(
            (self.n_support, self.n_support), matvec=matvec, dtype=complex
        )
        j, info = gmres(
            op,
            rhs,
            x0=rhs.copy(),
            rtol=self.tol,
            atol=0.0,
            restart=self.restart,
            maxiter=self.maxiter,
        )
        resid = float(np.linalg.norm(matvec(j) - rhs) / rhs_norm)
        return j, int(info), resid, count["n"]

    def solve(self, incident) -> ScatteringSolution:
        """Solve the volume integral equation for one incident field."""
        v = incident.field(self.support_points)
        grad_v = incident.gradient(self.support_points)
        rhs = self.apply_q(v, grad_v.T)
        j, info, resid, iters = self.solve_current(rhs)
        vj, grads = self._vj_and_grad_on_support(j)
        return ScatteringSolution(
            solver=self,
            current=j,
            u_support=v + vj,
            grad_u_support=grad_v.T + grads,
            incident=incident,
            gmres_info=info,
            relative_residual=resid,
            iterations=iters,
        )
