"""Exception types shared across the package."""


class JaegerError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(JaegerError, ValueError):
    """Operands have incompatible shapes or widths."""


class ContractError(JaegerError, ValueError):
    """A documented precondition was violated."""


class IndexOutOfRange(JaegerError, IndexError):
    """A token id or position fell outside its table."""


class GenerationError(JaegerError, RuntimeError):
    """Synthetic document generation could not satisfy its layout constraints."""


class UnknownElementError(JaegerError, KeyError):
    """A referenced element id does not exist in the document."""


class ParseError(JaegerError, ValueError):
    """A serialized corpus line is not valid JSON."""


class SchemaError(JaegerError, ValueError):
    """A record or config object does not match the expected fields."""


class CheckpointFormatError(JaegerError, ValueError):
    """A checkpoint file is corrupt or uses an unsupported layout."""


class CompatibilityError(JaegerError, ValueError):
    """Checkpoint tensors do not fit the receiving model."""


class TrainingDiverged(JaegerError, RuntimeError):
    """Training produced a non-finite loss."""
