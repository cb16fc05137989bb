"""Numerical laboratory for the lattice biharmonic (membrane) field in 4D.

Subpackages cover the discrete box lattice and its difference operators,
B-spline smoothing operators, discrete and full-space biharmonic Green's
functions, exact Gaussian field sampling, extreme-value statistics, and a
verification suite for the covariance estimates that drive all of it.
"""

from membranelab.lattice import GridSpec, Field

__all__ = ["GridSpec", "Field"]

__version__ = "0.1.0"
