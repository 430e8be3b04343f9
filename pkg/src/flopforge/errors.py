"""Exception types shared across the toolkit."""


class FlopforgeError(Exception):
    """Base class for every error raised by flopforge."""


class ConfigurationError(FlopforgeError, ValueError):
    pass


class MeasurementError(FlopforgeError, ValueError):
    pass


class BackendError(FlopforgeError, RuntimeError):
    pass


class FormatError(FlopforgeError, ValueError):
    pass


class InputError(FlopforgeError, ValueError):
    pass


class StatisticsError(FlopforgeError, ValueError):
    pass
