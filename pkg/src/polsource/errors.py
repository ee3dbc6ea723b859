"""Exception hierarchy shared by every module of the toolkit."""


class PolsourceError(Exception):
    """Base class; the CLI maps it to exit status 1."""


class ConfigurationError(PolsourceError):
    """Invalid or inconsistent device/scenario configuration."""


class DegenerateSourceError(PolsourceError):
    """Both generation rates vanish, so no state can be formed."""


class DegenerateFilterError(PolsourceError):
    """A spectral filter removed all of the amplitude."""


class DegenerateDataError(PolsourceError):
    """Count data carry no information (e.g. every count is zero)."""


class InvalidStateError(PolsourceError):
    """A matrix is not a valid density matrix beyond numerical tolerance."""


class ReconstructionError(PolsourceError):
    """A bootstrap resample failed to reconstruct."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"resample {index}: {cause}")
        self.index = index
        self.cause = cause
