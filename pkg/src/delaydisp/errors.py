"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameter, grid, or run configuration."""


class RepresentationError(ValueError):
    """A field was supplied in the wrong representation (physical vs spectral)."""


class GridMismatchError(ValueError):
    """Fields that must share a grid were sampled on different grids."""


class DivergedError(RuntimeError):
    """The simulated state became non-finite or exceeded the blow-up threshold."""


class HistoryAlignmentError(RuntimeError):
    """A history push was attempted at a timestamp off the slot lattice."""


class DecayFitError(ValueError):
    """Log-linear decay fit requested on nonpositive or degenerate samples."""


class CertificateNotApplicableError(ValueError):
    """The requested stability theorem does not apply to the given coefficients."""
