"""Numerical library for multi-flat F-manifold structures.

The package constructs and verifies flat-connection structures on
F-manifolds at desk scale: pointwise tensor calculus and residual
operators, natural/dual connections with their integrability conditions,
a zoo of closed-form models, extended vector fields realizing a
centerless Virasoro algebra, the six-field bi-flat ODE system with its
sigma-form reduction, tri-flat structures in three and four dimensions,
and regular non-semisimple structures with their Painleve IV/V
reductions.  Every claim is checked by residual operators and
conserved-quantity monitoring.
"""

__version__ = "0.1.0"
