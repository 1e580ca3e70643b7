"""Numerical lab for admissible pairs ``(u, E)`` on a uniform 2D grid.

The energy is ``int_Omega |grad u|^2 + Phi(Per*(E, Omega))`` where ``Per*`` is
the fractional ``sigma``-perimeter for ``sigma < 1`` and the classical
perimeter on a slightly enlarged domain for ``sigma = 1``.
"""
from ._accel import HAVE_NUMBA, backend, set_backend
from .field import (
    AdmissibilityError,
    AdmissiblePair,
    Grid,
    IndicatorSet,
    Region,
    ScalarField,
    build_grid,
    make_admissible,
    omega_ball,
    omega_box,
)
from .kernel import InteractionKernel, near_table
from .perimeter import (
    PerimeterValue,
    classical_perimeter,
    clean_cut_delta,
    fractional_perimeter,
    per_star,
)
from .curvature import classical_curvature, interface_points, nonlocal_mean_curvature
from .elliptic import SolverError, dirichlet_energy, harmonic_replacement, sign_constrained_replacement
from .energy import EnergyBreakdown, FlipCache, NonlinearityProfile, flip_delta, total_energy
from .minimizer import MinimizeOptions, MinimizeReport, alternating_minimize, minimize_u
from .analysis import density_profile, free_boundary_residual, growth_fit, holder_seminorm
from .instability import SaddleConfiguration, run_instability, saddle_pair

__version__ = "0.1.0"
