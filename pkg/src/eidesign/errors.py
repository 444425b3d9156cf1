class DesignError(Exception):
    """Base class for errors raised by eidesign."""


class DimensionError(DesignError, ValueError):
    pass


class SingularInformationError(DesignError):
    """Fisher information is (numerically) singular."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class DependentBasisError(DesignError):
    """Basis functions are linearly dependent under the chosen measure."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class FeasibilityError(DesignError):
    """Multiplicative update has a zero denominator."""


class QuadratureError(DesignError):
    pass


class ConfigError(DesignError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
