"""Exception hierarchy shared by all modules."""


class ThoraxFemError(Exception):
    """Base class for every error raised by the package."""


class FormatError(ThoraxFemError):
    """Malformed or unsupported input document."""


class UnsupportedElementError(FormatError):
    pass


class IntegrityError(ThoraxFemError):
    """Mesh refers to entities that do not exist."""


class ElementError(ThoraxFemError):
    """A single element is geometrically unusable."""

    def __init__(self, message: str, element: int | None = None):
        super().__init__(message)
        self.element = element


class MaterialError(ThoraxFemError):
    """Inadmissible elastic constants."""


class ConfigurationError(ThoraxFemError):
    """Scenario or model setup is inconsistent."""


class SolverError(ThoraxFemError):
    """Iterative solver failed to converge.

    Carries the best iterate so callers can inspect or resume.
    """

    def __init__(self, message: str, x=None, residual: float | None = None, step: int | None = None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.step = step


class ExportError(ThoraxFemError):
    pass
