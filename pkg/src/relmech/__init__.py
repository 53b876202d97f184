"""Covariant calculus of second-order dynamic equations in time-dependent mechanics."""

from .ad import DomainError, Taylor2, Taylor2Scalar, taylor2_eval
from .bundle import (
    ChartError,
    CoordinateChange,
    JetPoint1,
    JetPoint2,
    SampleBox,
    compose_charts,
    identity_chart,
    prolong_jet1,
    prolong_jet2,
)
from .connections import (
    ConnectionComponents,
    CurvatureTensor,
    DynamicConnection,
    DynamicEquation,
    FrameConnectionComponents,
    QuadraticFit,
    ReferenceFrame,
    SecondOrderConnection,
    TorsionTensor,
    curvature,
    frame_jet_prolongation,
    gamma_from_xi,
    quadratic_coefficients,
    relative_velocity,
    torsion,
    vertical_covariant_differential,
    xi_from_gamma,
    zero_equation,
    zero_frame,
)
from .expr import EvaluationError, Expression, ExpressionError, eval_ad, parse_expression
from .frames import (
    CoriolisReport,
    FreeMotionReport,
    adapted_frame_residual,
    coriolis_decomposition,
    covariant_residual,
    frame_connection,
    frame_of_adapted_chart,
    free_motion_curvature_test,
    free_motion_equation,
    galilei_chart,
    geodesic_residual,
    relative_acceleration,
    tilde_gamma,
    transform_dynamic_equation,
    transform_frame,
    xi_frame,
)
from .integrator import Trajectory, integrate, integrate_frame, pushforward_trajectory, trajectory_residual

__version__ = "0.1.0"
