"""Potential theory for the stationary Schrodinger operator on cones.

Radial and spherical building blocks, Green and Martin kernel surrogates,
equilibrium measures on dyadic blocks, and Wiener-type tests for minimal
thinness and rarefiedness at infinity.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DomainError,
    NotApplicableError,
    RejectedPotentialError,
    UnsupportedConfigurationError,
    WienerConeError,
)
from .radial import PotentialSpec, RadialBasis, eval_basis, exponents, solve_radial, wronskian_residual  # noqa: E402
from .spherical import DomainSpec, Point, SphericalEigen, eval_phi, solve_eigen  # noqa: E402
from .kernels import (  # noqa: E402
    ORACLE,
    SURROGATE,
    ConeContext,
    KernelModel,
    build_context,
    fit_envelope,
    green,
    green_bounds,
    halfspace_green_oracle,
    martin_infinity,
    martin_origin,
    poisson_surrogate,
)
from .sets import AxisBeads, Ball, BoundaryRegion, ExplicitPoints, SetSpec, ShellSector, discretize  # noqa: E402
from .capacity import (  # noqa: E402
    AtomicMeasure,
    EquilibriumResult,
    Superfunction,
    capacity_mass,
    equilibrium_measure,
    green_energy,
    green_potential,
    reduced_function,
    superfunction_eval,
)
from .criteria import (  # noqa: E402
    Thresholds,
    WienerReport,
    asymptotic_profile,
    classify_minimally_thin_infinity,
    classify_rarefied_infinity,
    exceptional_set,
    theorem8_crosscheck,
    thinness_at_boundary_point,
)
