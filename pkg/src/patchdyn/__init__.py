"""Equation-free patch dynamics on curvilinear grids."""

from .cpi import SchemeConfig, Trajectory, estimate_derivative, projective_step, run
from .gaptooth import CoarseField, GapToothStepper, gap_tooth_step, lift, restrict
from .geometry import (
    Mapping,
    PhysicalCoefficients,
    from_cdr,
    identity_map,
    jacobian,
    polar_map,
    stretched_map,
    transform_coefficients,
)

__version__ = "0.1.0"

__all__ = [
    "CoarseField",
    "GapToothStepper",
    "Mapping",
    "PhysicalCoefficients",
    "SchemeConfig",
    "Trajectory",
    "estimate_derivative",
    "from_cdr",
    "gap_tooth_step",
    "identity_map",
    "jacobian",
    "lift",
    "polar_map",
    "projective_step",
    "restrict",
    "run",
    "stretched_map",
    "transform_coefficients",
]
