"""Exception hierarchy shared across the package."""


class HawkesError(Exception):
    """Base class for all package-specific failures."""


class NormDivergenceError(HawkesError):
    """A kernel has a divergent L1 norm (e.g. power law with exponent <= 1)."""


class StabilityError(HawkesError):
    """The norm matrix has spectral radius >= 1, so no stationary regime exists.

    Carries the offending spectral radius in ``rho``.
    """

    def __init__(self, rho, message=None):
        self.rho = float(rho)
        super().__init__(message or f"unstable model: spectral radius {self.rho:.6g} >= 1")


class DivergenceError(HawkesError):
    """A simulation exceeded its event cap (runaway intensity)."""


class NumericalError(HawkesError):
    """An iterative numerical procedure failed to converge."""


class IllConditionedError(HawkesError):
    """A linear system is too ill-conditioned to solve reliably.

    Carries the reciprocal condition estimate in ``rcond``.
    """

    def __init__(self, rcond, message=None):
        self.rcond = float(rcond)
        super().__init__(
            message
            or f"linear system ill-conditioned (rcond = {self.rcond:.3g}); "
            "try a larger bandwidth h or fewer quadrature points Q"
        )


class EventFormatError(HawkesError):
    """An event file failed to parse or validate.

    ``line`` is the 1-based offending line number when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(HawkesError):
    """A model or run configuration is malformed."""
