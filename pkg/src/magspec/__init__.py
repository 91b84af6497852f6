"""Spectral continuity of magnetic Harper-like operators on finite grids."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    MagspecError,
    NonHermitianError,
    NumericalError,
    PositivityError,
    SpectrumProximityError,
)
from .operators import (
    Grid,
    KernelOperator,
    PhaseFunction,
    sh_norm,
    truncate,
    twist,
    uniformity_defect,
    validate_phase,
)
from .spectral import Spectrum, eigvalsh, hausdorff, op_norm

__all__ = [
    "__version__",
    "MagspecError",
    "ConfigError",
    "NonHermitianError",
    "NumericalError",
    "PositivityError",
    "SpectrumProximityError",
    "Grid",
    "KernelOperator",
    "PhaseFunction",
    "sh_norm",
    "truncate",
    "twist",
    "uniformity_defect",
    "validate_phase",
    "Spectrum",
    "eigvalsh",
    "hausdorff",
    "op_norm",
]
