"""Spectra of the squared MIT-bag Dirac operator on convex planar domains.

Three discretized quadratic forms are provided for the same limit problem:
the constrained boundary form, the whole-space form with a large exterior
mass, and the boundary-penalty form.  See ``README.md`` for a tour.
"""

from mitbag.clifford import DiracAlgebra, alpha_dot, boundary_projector, build_dirac_matrices
from mitbag.geometry import (
    ConvexDomain,
    cutoff_family,
    disk_domain,
    polygon_domain,
    round_corners,
)

__all__ = [
    "ConvexDomain",
    "DiracAlgebra",
    "alpha_dot",
    "boundary_projector",
    "build_dirac_matrices",
    "cutoff_family",
    "disk_domain",
    "polygon_domain",
    "round_corners",
]

__version__ = "0.1.0"
