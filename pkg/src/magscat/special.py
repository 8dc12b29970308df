"""Spherical Bessel/Hankel functions, spherical harmonics, growth envelopes.

Thin wrappers around scipy.special with the conventions used throughout:
sph_harm_y(l, m, theta, phi) with theta the polar angle (includes the
Condon-Shortley phase), and outgoing Hankel functions h_l = j_l + i*y_l.

The envelope helpers give the standard small-argument/large-order
comparison quantities

    |j_l(t)| <~ C (e t / (2l+1))^l / (2l+1),
    |h_l(t)| <~ C ((2l+1) / (e t))^l,

whose l-dependence powers the exponentially weighted far-field norm and the
near-field/far-field Lipschitz bound.  The constants C are not asserted
anywhere; tests measure them.
"""

from __future__ import annotations

import numpy as np
from scipy.special import sph_harm_y, spherical_jn, spherical_yn

__all__ = [
    "spherical_h1",
    "spherical_h1_derivative",
    "ylm",
    "lm_pairs",
    "jn_envelope",
    "hn_envelope",
]


def spherical_h1(l: int, z) -> np.ndarray:
    """Outgoing spherical Hankel function h_l(z) = j_l(z) + i*y_l(z)."""
    return spherical_jn(l, z) + 1j * spherical_yn(l, z)


def spherical_h1_derivative(l: int, z) -> np.ndarray:
    """Derivative h_l'(z)."""
    return spherical_jn(l, z, derivative=True) + 1j * spherical_yn(l, z, derivative=True)


def ylm(l: int, m: int, theta, phi) -> np.ndarray:
    """Orthonormal spherical harmonic Y_l^m(theta, phi), theta polar."""
    return sph_harm_y(l, m, theta, phi)


def lm_pairs(lmax: int) -> list:
    """All (l, m) with 0 <= l <= lmax, -l <= m <= l, in lexicographic order."""
    return [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def jn_envelope(l, t):
    """Order-l smallness envelope (e t / (2l+1))^l / (2l+1) for j_l(t)."""
    l = np.asarray(l, dtype=float)
    t = np.asarray(t, dtype=float)
    return (np.e * t / (2 * l + 1)) ** l / (2 * l + 1)


def hn_envelope(l, t):
    """Order-l growth envelope ((2l+1) / (e t))^l for |h_l(t)|."""
    l = np.asarray(l, dtype=float)
    t = np.asarray(t, dtype=float)
    return ((2 * l + 1) / (np.e * t)) ** l
