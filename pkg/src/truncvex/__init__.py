"""Numerical analysis of how far a smooth planar field is from being convex.

The package computes the positive-definite Hessian region, the critical set,
the smallest levels above which truncations ``max(q, f)`` are quasiconvex or
convex, and tests injectivity of the gradient map on overlevel sets.  The
Cassini quartic ships as a fully ground-truthed builtin.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError, CurvatureUndefinedError, DomainError, InconclusiveError, InvalidInputError,
    TruncvexError, UndefinedError,
)
from .field import (  # noqa: E402
    GridSpec, Point2, ScalarField2, SymMat2, check_derivatives, finite_difference_field,
    is_positive_definite, is_positive_semidefinite, max_field, polynomial_field,
)
from .cassini import (  # noqa: E402
    CassiniParams, GroundTruth, c_plus_minus_membership, cassini_field, g_field, ground_truth,
    known_collision,
)
from .registry import make_field  # noqa: E402
from .hess_region import (  # noqa: E402
    HMaxEstimate, RegionMask, complement_bounded, h_max, hess_plus_0_mask, hess_plus_mask, level_mask,
    nu_vs_h_check,
)
from .critical import CriticalPoint, CriticalSetReport, find_critical_points, morse_index, nu_max  # noqa: E402
from .levels import LevelCurve, classify_levels, curvature_sign, level_curve  # noqa: E402
from .truncation import (  # noqa: E402
    Bracket, ConvexityProbe, ConvexityVerdict, estimate_scl, estimate_sql, sublevel_convex,
    subdifferential_of_truncation, truncate, truncation_convex,
)
from .gradient_map import (  # noqa: E402
    CollisionPair, InjectivityReport, gamma_level_scan, gradient_collision_scan, monotonicity_check,
    valence_bounds,
)
