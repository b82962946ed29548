"""Carnot group calculus: group laws, metrics, horizontal curves and Pansu derivatives."""

from .algebra import StratifiedAlgebra, catalog, resolve, validate
from .bch import GroupLaw, compute_group_law, verify_group_law
from .decomposition import DecompositionScheme, HorizontalWord, build_scheme, calibrated_scheme, decompose, estimate_constants
from .group import CarnotGroup, load_group
from .horizontal import Curve, HorizontalControl, is_horizontal, lift, ray_error_study
from .pansu import (
    Box,
    CarnotMap,
    MetricBall,
    ModulusOfContinuity,
    catalog_map,
    continuity_study,
    convergence_study,
    difference_quotient,
    horizontal_derivative,
    pansu_derivative,
    region,
    verify_pansu_trick,
    verify_z0_bridge,
)

__version__ = "0.1.0"

__all__ = [
    "Box", "CarnotGroup", "CarnotMap", "Curve", "DecompositionScheme", "GroupLaw", "HorizontalControl",
    "HorizontalWord", "MetricBall", "ModulusOfContinuity", "StratifiedAlgebra", "build_scheme",
    "calibrated_scheme", "catalog", "catalog_map", "compute_group_law", "continuity_study", "convergence_study",
    "decompose", "difference_quotient", "estimate_constants", "horizontal_derivative", "is_horizontal", "lift",
    "load_group", "pansu_derivative", "ray_error_study", "region", "resolve", "validate", "verify_group_law",
    "verify_pansu_trick", "verify_z0_bridge",
]
