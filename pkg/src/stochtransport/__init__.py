"""Monte Carlo solver and diagnostics for linear transport driven by a rough drift plus Brownian noise."""

from .errors import ConfigError, NumericsError, StochTransportError, TruncationWarning

__version__ = "0.1.0"

__all__ = ["ConfigError", "NumericsError", "StochTransportError", "TruncationWarning", "__version__"]
