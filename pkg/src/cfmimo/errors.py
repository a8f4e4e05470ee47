"""Exception hierarchy shared across the simulator."""


class CfMimoError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(CfMimoError):
    """Invalid user-supplied configuration (bad counts, dimensions, keys)."""


class NumericalError(CfMimoError):
    """Internal numerical failure (non-PSD matrices, inconsistent terms)."""


class DegenerateLinkError(NumericalError):
    """A serving link has zero estimated-channel power but nonzero data power."""
