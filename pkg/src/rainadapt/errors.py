"""Exception hierarchy.

``DataError`` subclasses map to CLI exit code 2, ``NumericError`` subclasses
to exit code 3.
"""

from __future__ import annotations


class RainAdaptError(Exception):
    pass


class DataError(RainAdaptError, ValueError):
    pass


class NumericError(RainAdaptError, ArithmeticError):
    pass


class EmptyAfterValidation(DataError):
    pass


class DegenerateColumn(DataError):
    def __init__(self, index: int, name: str | None = None):
        self.index = index
        self.name = name
        label = f"{index} ({name})" if name else str(index)
        super().__init__(f"feature column {label} has zero variance")


class DimensionMismatch(DataError):
    pass


class EmptyPartition(DataError):
    pass


class EmptyInput(DataError):
    pass


class InsufficientData(DataError):
    pass


class AllExcluded(DataError):
    pass


class NetworkError(DataError):
    pass


class ServiceError(DataError):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        msg = f"service returned HTTP {status}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MalformedResponse(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class MissingResults(DataError):
    def __init__(self, city: str, method: str):
        self.city = city
        self.method = method
        super().__init__(f"no evaluation result for city={city!r} method={method!r}")


class LeakageError(DataError):
    pass


class NonFiniteGradient(NumericError):
    pass


class SingularMetaProblem(NumericError):
    pass


class MissingArtifact(DataError):
    """A cache file or checkpoint an earlier stage should have produced is absent."""
