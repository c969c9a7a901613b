"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and every other FramesynthError
to exit code 3.
"""


class FramesynthError(Exception):
    """Base class for all package errors."""


class ConfigError(FramesynthError):
    """Invalid configuration: bad values, missing paths, degenerate setups."""


class DomainError(FramesynthError):
    """A numeric input lies outside its documented domain."""


class SymbolError(FramesynthError):
    """A phoneme symbol is not in the alphabet."""

    def __init__(self, symbol):
        super().__init__(f"unknown phoneme symbol {symbol!r}")
        self.symbol = symbol


class FormatError(FramesynthError):
    """A serialized file is malformed; carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimensionError(FramesynthError):
    """Array shapes are inconsistent with the declared configuration."""


class NumericError(FramesynthError):
    """A non-finite value appeared where finite arithmetic was required."""


class StateError(FramesynthError):
    """An operation was called without the state it requires."""


class EvaluationError(FramesynthError):
    """Evaluation is impossible, e.g. every frame was excluded."""


class GenerationError(FramesynthError):
    """Generation produced an invalid frame; carries the frame index."""

    def __init__(self, message, frame):
        super().__init__(f"{message} (frame {frame})")
        self.frame = frame
