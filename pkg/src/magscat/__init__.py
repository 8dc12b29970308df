"""Numerical laboratory for time-harmonic scattering by magnetic potentials.

The package provides a spectral forward solver for the perturbed Helmholtz
equation with a magnetic/electric potential pair, near- and far-field data
maps on a sphere enclosing the scatterer, oscillating probe construction,
and Fourier-mode reconstruction of the magnetic field (curl of the vector
potential) and the electric potential from boundary data.
"""

__version__ = "0.1.0"
