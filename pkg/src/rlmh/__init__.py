"""Adaptive Metropolis-Hastings with learned, state-dependent step sizes."""

from .errors import CatastrophicFailure, ConfigError, RlmhError

__version__ = "0.1.0"

__all__ = ["CatastrophicFailure", "ConfigError", "RlmhError", "__version__"]
