"""Simulator of rare-earth-ion-doped crystal quantum-computer hardware."""

from .crystal import Ensemble, LevelScheme, absorption_spectrum, sample_ensemble
from .errors import ConfigError, PhysicsError, RareQCError

__version__ = "0.1.0"

__all__ = ["Ensemble", "LevelScheme", "absorption_spectrum", "sample_ensemble", "ConfigError",
           "PhysicsError", "RareQCError", "__version__"]
