"""Numerical laboratory for weighted Hardy inequalities on proper domains.

Distance-to-boundary weighted norms ``||f||_{L_p(d^-alpha dx)}``, the Hardy
operator ``T[u] = u/d`` with its sharp constant ``K(p) = p/(p + alpha - n)``,
Grand Lebesgue norms over exponent sweeps, and dilation scaling laws.
"""

__version__ = "0.1.0"

from .calculus import (  # noqa: E402
    NormValue,
    apply_hardy_operator,
    gradient_at,
    gradient_lp_norm,
    sobolev_norm,
    tail_function,
    weighted_lp_norm,
)
from .dilation import (  # noqa: E402
    ExponentConfig,
    dilate,
    exponent_relation,
    functional_L,
    functional_R,
    necessity_probe,
    verify_scaling_laws,
)
from .domain import (  # noqa: E402
    Ball,
    Box,
    ConvexPolytope,
    HalfSpaceProduct,
    Interval,
    bounding_box,
    contains,
    distance_to_boundary,
)
from .grand_lebesgue import (  # noqa: E402
    check_gls_hardy,
    extremal,
    gls_norm,
    log_corrected,
    make_pgrid,
    make_psi_K,
    natural,
    power,
    tabulated,
)
from .hspw import hardy_constant, sharpness_search, verify_hspw  # noqa: E402
from .quadrature import IntegralResult, QuadratureConfig, integrate_weighted, measure_of_superlevel  # noqa: E402
