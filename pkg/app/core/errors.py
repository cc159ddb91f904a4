# Copyright 2024
# Directory: ContourMARL/app/core/errors.py

"""
Exception hierarchy for the contour evolution toolkit.
Services raise these; only the CLI maps them onto exit codes.
"""

from typing import List, Optional, Sequence


class ContourMarlError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ContourMarlError):
    """Invalid or unknown configuration keys/values."""


class ShapeMismatchError(ContourMarlError, ValueError):
    """Two operands (arrays, masks, tensors) have incompatible shapes."""

    def __init__(self, op: str, left: Sequence[int], right: Sequence[int]):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: incompatible shapes {self.left} and {self.right}")


class InvalidGeometryError(ContourMarlError, ValueError):
    """A contour, box or mask violates its invariants."""


class ActionError(ContourMarlError, ValueError):
    """An action batch has the wrong length or non-finite entries."""


class ShapeTooSmallError(ContourMarlError):
    """A procedurally generated shape covers too few pixels."""

    def __init__(self, area: int, minimum: int):
        self.area = area
        self.minimum = minimum
        super().__init__(f"shape area {area} px is below the minimum of {minimum} px")


class CorpusError(ContourMarlError):
    """Corpus manifest or its files are missing or malformed."""


class CheckpointError(ContourMarlError):
    """Checkpoint file unreadable, wrong version, or wrong architecture."""


class NonFiniteLossError(ContourMarlError):
    """A training loss became NaN or infinite."""

    def __init__(self, loss_name: str, batch_index: int, value: float):
        self.loss_name = loss_name
        self.batch_index = batch_index
        self.value = value
        super().__init__(f"{loss_name} is non-finite ({value}) at batch {batch_index}")


class NonFiniteParameterError(ContourMarlError):
    """A parameter tensor contains NaN/inf after an update."""

    def __init__(self, names: List[str], batch_index: Optional[int] = None):
        self.names = list(names)
        self.batch_index = batch_index
        super().__init__(f"non-finite parameters after batch {batch_index}: {', '.join(self.names)}")


class GradCheckFailure(ContourMarlError):
    """One or more gradient-check blocks exceeded the error threshold."""

    def __init__(self, failing: List[str]):
        self.failing = list(failing)
        super().__init__(f"gradient check failed for: {', '.join(self.failing)}")
