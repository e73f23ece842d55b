"""Scale-inhomogeneous DGFF toolkit."""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, FieldError, NumericError,  # noqa: E402
                     PreconditionError, SizeError)
from .geometry import BoxSpec  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .profile import VarianceProfile, check_assumption, make_profile  # noqa: E402
from .rng import stream  # noqa: E402

__all__ = ["__version__", "BACKEND", "BoxSpec", "VarianceProfile", "check_assumption",
           "make_profile", "stream", "ConfigError", "DomainError", "FieldError",
           "NumericError", "PreconditionError", "SizeError"]
