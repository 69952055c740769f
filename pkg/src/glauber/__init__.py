"""Simulation and numerical verification of Glauber birth-death dynamics for continuum Gibbs point processes."""

__version__ = "0.1.0"

from .errors import (AccuracyError, CapacityError, CoalescenceError, ConfigError, DomainError,  # noqa: F401
                     EstimationError, GlauberError, ModelError, NumericalError, ParameterError)
from .geometry import Box, Configuration, Lattice, ModelParams, delta_integral, relative_energy  # noqa: F401
from .potentials import HardCore, SoftGaussian, Strauss, Zero  # noqa: F401
