"""Facilitation-induced transparency in dual- and multi-channel Rydberg ensembles."""

from .config import ConfigDocument, SystemConfig, default_grid
from .errors import (
    CalibrationError,
    CapacityError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    FitSimError,
    NumericalFailure,
    SingularGeometryError,
)
from .hilbert import AtomSite, CompositeSpace, DriveParams, InteractionSpec, TwoPhotonDrive

__version__ = "0.1.0"

__all__ = [
    "AtomSite", "CalibrationError", "CapacityError", "CompositeSpace", "ConfigDocument", "ConfigError",
    "ConvergenceError", "DimensionError", "DriveParams", "FitSimError", "InteractionSpec",
    "NumericalFailure", "SingularGeometryError", "SystemConfig", "TwoPhotonDrive", "default_grid",
]
