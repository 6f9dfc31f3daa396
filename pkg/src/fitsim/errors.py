"""Exception hierarchy shared by all fitsim modules."""


class FitSimError(Exception):
    """Base class for every error raised by fitsim."""


class DimensionError(FitSimError, ValueError):
    pass


class ConfigError(FitSimError, ValueError):
    """Invalid or inconsistent configuration.

    ``field`` and ``line`` are filled in when the problem can be traced back to
    a specific entry of a config file.
    """

    def __init__(self, message, *, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SingularGeometryError(FitSimError, ValueError):
    pass


class HermiticityError(FitSimError, ValueError):
    pass


class NormalizationError(FitSimError, ValueError):
    pass


class DivisionByZeroError(FitSimError, ZeroDivisionError):
    pass


class UndefinedStatisticError(FitSimError, ValueError):
    pass


class CapacityError(FitSimError, MemoryError):
    pass


class NumericalFailure(FitSimError, ArithmeticError):
    """Base for failures of the numerical machinery (CLI exit code 3)."""


class NumericalInstabilityError(NumericalFailure):
    def __init__(self, message, *, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class NonUniqueSteadyStateError(NumericalFailure):
    pass


class ConvergenceError(NumericalFailure):
    pass


class CalibrationError(NumericalFailure):
    pass
