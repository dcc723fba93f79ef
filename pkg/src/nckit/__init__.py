"""Near-concentric cavity toolkit: resonator and mode math, actuator
alignment geometry, noise spectral analysis, and lock-loop simulation."""

__version__ = "0.1.0"

from . import alignment, cavity, lockloop, noise  # noqa: F401
