"""Exception types shared across the package.

CLI exit-code mapping (see cli.py): I/O failures -> 2, numeric failures -> 3,
precondition violations -> 4, data mismatches -> 5.
"""


class BgCompleteError(Exception):
    """Base class for all package errors."""


# --- I/O (exit 2) ---

class UnreadableFile(BgCompleteError):
    pass


class MissingFrame(BgCompleteError):
    pass


class IoFailure(BgCompleteError):
    pass


# --- numeric failures (exit 3) ---

class AllPixelsMissing(BgCompleteError):
    pass


# --- precondition violations (exit 4) ---

class PreconditionError(BgCompleteError):
    pass


class WindowTooLarge(PreconditionError):
    pass


class WrongChannelCount(PreconditionError):
    pass


class TooSmallForPyramid(PreconditionError):
    pass


class OddDimensions(PreconditionError):
    pass


class WeightsMissing(PreconditionError):
    pass


class EmptyCategory(PreconditionError):
    pass


# --- data mismatches (exit 5) ---

class DimensionMismatch(BgCompleteError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass
