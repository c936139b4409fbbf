"""Exception and warning types shared across the package."""


class TruncationError(ValueError):
    """A truncated Fock basis cannot represent the requested state or operation."""


class DomainError(ValueError):
    """An argument lies outside the numerically reliable domain of an operation."""


class StencilOutOfDomain(DomainError):
    """A finite-difference stencil would sample the characteristic function outside its domain."""


class UndefinedForVacuum(ArithmeticError):
    """The Mandel Q parameter is 0/0 for (numerically) zero mean excitation."""


class IllConditionedDesign(RuntimeError):
    """A probe-schedule design matrix is too ill-conditioned to invert reliably."""


class ConfigError(ValueError):
    """A run configuration file failed to parse or validate."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConvergenceWarning(RuntimeWarning):
    """A truncated series was cut off before its terms became negligible."""
