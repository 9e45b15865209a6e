"""Two-level quantum systems as plane curves.

A protocol (Delta(t), Omega(t)) is the velocity of a plane curve: its speed is
the adiabatic energy, its turning angle the mixing angle, and its curvature
the nonadiabatic coupling per unit dynamical phase.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdiacurveError,
    NotFound,
    OutOfWindow,
    RegularityError,
    SpecError,
    ToleranceNotMet,
)
from .exprdsl import DomainError, ExprSyntaxError, UnknownSymbol, format_expr, parse_expression  # noqa: E402
from .models import (  # noqa: E402
    DrivingProtocol,
    catalog,
    eval_protocol,
    expression_protocol,
    get_model,
    model_info,
    protocol_derivatives,
    protocol_from_spec,
    tabulated_protocol,
)
from .geometry import (  # noqa: E402
    CurvatureProfile,
    CurveFlags,
    GeometrySample,
    PlaneCurvePath,
    VertexReport,
    arc_length,
    build_curve,
    classify_curve,
    curvature,
    find_vertices,
    frenet_propagate,
    reconstruct_from_curvature,
    reconstructed_protocol,
    reparametrize_unit_speed,
    speed,
    turning_angle,
)
from .dynamics import (  # noqa: E402
    PassageReport,
    StateTrajectory,
    StateVector,
    adiabatic_coupling,
    adiabaticity_margin,
    basis_transform,
    classify_passage,
    eigenstructure,
    hamiltonian_diabatic,
    propagate,
    transition_probability,
)
