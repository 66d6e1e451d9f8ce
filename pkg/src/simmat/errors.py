"""Exception types shared across the package.

Every error raised on a documented failure path is one of these, so callers
(and the CLI exit-code mapping) can distinguish bad configuration from bad
runtime state.
"""


class SimmatError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SimmatError, ValueError):
    """Tensor shapes or channel counts do not line up; message names the axis."""


class ConfigurationError(SimmatError, ValueError):
    """A config object or combination of configs is invalid."""


class InputError(SimmatError, ValueError):
    """A runtime input value is out of its documented domain."""


class IntegrityError(SimmatError, RuntimeError):
    """Internal bookkeeping violated, e.g. a trainable parameter without a gradient."""


class NumericError(SimmatError, ArithmeticError):
    """A non-finite value appeared where the contract requires finite math."""


class StateError(SimmatError, RuntimeError):
    """An operation was called in the wrong lifecycle state (e.g. double injection)."""


class CheckpointFormatError(SimmatError, ValueError):
    """A serialized checkpoint or tensor container is malformed; names the tensor when known."""


class GenerationError(SimmatError, RuntimeError):
    """Synthetic scene generation could not satisfy its spec within bounded retries."""


class InfeasibleTargetError(SimmatError, ValueError):
    """No capacity knob value can reach the requested trainable fraction."""


class UnsupportedVariantError(SimmatError, ValueError):
    """The requested operation is not defined for this variant."""
