"""Kinetic transport, its diffusion limit, and numerical checks of the associated inequalities."""

from .grid import (
    Ball,
    KineticState,
    OpacityField,
    Rectangle,
    ScalarField,
    SpatialGrid,
    TraceRecord,
    VelocityQuadrature,
    boundary_outflow_integral,
    lp_norm,
    subdomain_mask,
    velocity_average,
)
from .scattering import RelaxationMethod, ScatteringKind, apply_scattering, relaxation_step
from .kinetic import KineticRunConfig, Splitting, run_kinetic, transport_step
from .diffusion import EllipticOperator, TimeScheme, eigendecompose, h_minus1_norm, heat_step, solve_elliptic

__version__ = "0.1.0"
