"""
errors.py - Exception hierarchy shared by the simulator, diagnostics and CLI
"""

from typing import Optional


class ChemotaxisError(Exception):
    """Base class for every error raised by chemotaxis_fv"""


class DomainError(ChemotaxisError, ValueError):
    """Argument outside the mathematical domain of a function"""


class ContractError(ChemotaxisError):
    """An operator precondition was broken by the caller"""


class DegenerateInputError(ChemotaxisError, ValueError):
    """Ratio or fit requested on input that makes it undefined"""


class PositivityError(ChemotaxisError):
    """u went negative or v went nonpositive during a step"""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t


class DivergenceError(ChemotaxisError):
    """A step produced non-finite values"""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t


class SolverFailure(ChemotaxisError):
    """A run aborted; wraps the step error with the time it happened at"""

    def __init__(self, cause: ChemotaxisError, t: float):
        super().__init__(f"run failed at t={t!r}: {cause}")
        self.cause = cause
        self.t = t


class ConfigError(ChemotaxisError, ValueError):
    """Bad run configuration; names the offending key and line"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.detail = message
        self.key = key
        self.line = line


class FormatError(ChemotaxisError, ValueError):
    """Malformed time series or field snapshot file"""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
