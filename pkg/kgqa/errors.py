# errors.py
from typing import Optional, Sequence


class KGQAError(Exception):
    """Base class for every error the engine raises on purpose.

    ``exit_code`` is what the command line returns when the error escapes a
    subcommand.
    """
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(KGQAError):
    exit_code = 2


class DataError(KGQAError):
    exit_code = 3


class IngestError(DataError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class KnowledgeLookupError(DataError, KeyError):
    def __str__(self) -> str:
        return self.message


class GenerationError(DataError):
    pass


class SupervisionError(DataError):
    pass


class NumericError(KGQAError):
    exit_code = 4


class DimensionError(NumericError):
    def __init__(self, op: str, left: Sequence[int], right: Sequence[int]):
        super().__init__(f"{op}: incompatible shapes {tuple(left)} and {tuple(right)}")
        self.left = tuple(left)
        self.right = tuple(right)


class DomainError(NumericError):
    pass


class NonFiniteError(NumericError):
    pass


class EvaluationError(NumericError):
    pass


class RetrievalError(KGQAError):
    exit_code = 4


class RetrievalExhaustedError(RetrievalError):
    pass


class PoolingError(RetrievalError):
    pass
