"""Radon transforms of potentials on the round sphere, their Hamiltonian
flow, spectra of ``-Laplacian + V`` and localized L^p measurements of the
eigenfunctions."""

__version__ = "0.1.0"

from .sphere import CapSpec, Geodesic, QuadratureGrid, SpherePoint, geodesic_from_normal  # noqa: F401
from .potential import PotentialSpec, parse_polynomial, preset  # noqa: F401
from .radon import RadonField, check_hypotheses, find_critical_points, radon_multiplier  # noqa: F401
from .flow import fit_scaling_exponent, integrate_flow, radon_indicator, sup_flow_average  # noqa: F401
from .spectral import Spectrum, assemble_hamiltonian, cached_spectrum, eigensolve  # noqa: F401
from .norms import ball_mass, exponents, lp_norm, m_functional, theorem_bound, verify_report  # noqa: F401
