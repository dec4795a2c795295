"""Certified global inversion of nonsmooth Lipschitz maps on finite grids."""

from .certificates import (HadamardCertificate, RadialProfile, Weight, a_priori_radius, certify,
                           detect_jumps, hadamard_verdict, inverse_lipschitz_bound, lsc_envelope,
                           mu_profile, rho_integral, weight_from_m)
from .errors import *  # noqa: F401,F403
from .linalg import (L1, L2, L_INF, Bound, LinearMap, NormTag, banach_constant, dual_banach_constant,
                     dual_vector, min_norm_point, operator_norm)
from .pseudo_jacobian import (BallForm, HullForm, PointMap, Singleton, delta_Fy, inj_at, lambda_lower,
                              linear_map, min_norm_element, pj_hull_sample, pj_validate, reg_at,
                              segment_injectivity_modulus, sur_at, sur_estimate)
from .solver import (SolveOptions, SolveReport, descent_direction, openness_oracle_2d, ps_classify,
                     solve, squared_mode_check, uniqueness_certificate)
from .volterra import (Theta, VolterraProblem, build_map, check_phi, fixed_point_solve,
                       verify_inverse_lipschitz)

__version__ = "0.1.0"
