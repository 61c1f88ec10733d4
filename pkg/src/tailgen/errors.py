"""Exception types shared across the package.

Data-shaped problems (bad files, bad dimensions, degenerate inputs) derive
from DataError so the CLI can map them to a single exit code. Numeric
blow-ups during adversarial training get their own class because they carry
partial training history for post-mortem inspection.
"""


class TailgenError(Exception):
    """Base class for all package errors."""


class DataError(TailgenError, ValueError):
    """Invalid or degenerate input data."""


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    pass


class EmptyData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class TooFewValues(DataError):
    pass


class DegenerateDistribution(DataError):
    """Target has no spread at all; no tail can be defined."""


class EmptyRareSet(DataError):
    """No row clears the relevance threshold; oversampling is a no-op."""


class RareSetTooSmall(DataError):
    """A single rare row has no neighbours to synthesize from."""


class NotEnoughNeighbours(DataError):
    pass


class BadWidths(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class NonScalarOutput(DataError):
    pass


class BatchTooSmall(DataError):
    pass


class BadBandwidth(DataError):
    pass


class InsufficientData(DataError):
    pass


class KTooLarge(DataError):
    pass


class BadComponentCount(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DivergedTraining(TailgenError, RuntimeError):
    """Adversarial training produced a non-finite loss.

    Carries the partial per-iteration history recorded before the abort.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
