"""Dirichlet spectra of spherical triangles and cone exponents of Brownian motion."""

__version__ = "0.1.0"

from .geometry import Digon, DomainError, Triangle  # noqa: E402
from .fem import assemble, build_mesh  # noqa: E402
from .eigensolve import SolverSettings, extrapolated_spectrum, solve_smallest  # noqa: E402
from .shape_derivative import feynman_hellmann, hadamard_extrapolated, hadamard_simple  # noqa: E402
from .continuation import level_alpha_c, trace_curve  # noqa: E402
from .asymptotics import exponent_ladder, heat_kernel, rationality_check  # noqa: E402

__all__ = [
    "Digon",
    "DomainError",
    "Triangle",
    "assemble",
    "build_mesh",
    "SolverSettings",
    "extrapolated_spectrum",
    "solve_smallest",
    "feynman_hellmann",
    "hadamard_extrapolated",
    "hadamard_simple",
    "level_alpha_c",
    "trace_curve",
    "exponent_ladder",
    "heat_kernel",
    "rationality_check",
]
