"""Exception hierarchy shared by all modules."""


class SwaplabError(Exception):
    pass


class ParseError(SwaplabError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(SwaplabError, ValueError):
    def __init__(self, message: str, household_id: int | None = None):
        self.household_id = household_id
        super().__init__(message)


class GeographyError(SwaplabError, ValueError):
    pass


class EmptyPopulationError(SwaplabError, ValueError):
    pass


class ConfigError(SwaplabError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class AlignmentError(SwaplabError, ValueError):
    def __init__(self, message: str, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class AuditError(SwaplabError, ValueError):
    pass


class CalibrationError(SwaplabError, RuntimeError):
    def __init__(self, message: str, v_lo: float | None = None, v_hi: float | None = None):
        self.v_lo = v_lo
        self.v_hi = v_hi
        super().__init__(message)


class DegenerateDesignError(SwaplabError, ValueError):
    pass


class InsufficientDataError(SwaplabError, ValueError):
    pass


class RegistryError(SwaplabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""
