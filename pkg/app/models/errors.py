"""
Domain errors.

All of them are ValueErrors: they signal input the tracker cannot work with,
and the API maps ValueError to HTTP 400.
"""


class DegenerateParticleSetError(ValueError):
    """Particle set with zero or non-finite total weight."""


class LikelihoodDomainError(ValueError):
    """Measurement value outside the support of the likelihood (z < 0)."""


class InstanceTooLargeError(ValueError):
    """Association problem too large for exhaustive enumeration."""


class ShapeError(ValueError):
    """Ragged or otherwise mis-shaped numeric input."""
