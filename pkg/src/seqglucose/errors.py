"""Exception types shared across the package."""


class SeqGlucoseError(ValueError):
    """Base class for all errors raised by this package."""


class ShapeError(SeqGlucoseError):
    """An array argument has an incompatible dimension."""


class ConfigurationError(SeqGlucoseError):
    """A configuration value violates a structural constraint."""


class StateError(SeqGlucoseError):
    """An operation was invoked out of order (e.g. backward before forward)."""


class InputError(SeqGlucoseError):
    """A numeric input is outside its documented domain."""


class ParseError(SeqGlucoseError):
    """A text record could not be parsed; carries the offending line number."""


class DataError(SeqGlucoseError):
    """Parsed data violates an invariant (ordering, ranges, file headers)."""


class TrainingDivergedError(SeqGlucoseError):
    """Training produced a non-finite loss; names the epoch and batch."""
