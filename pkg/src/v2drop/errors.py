"""Exception hierarchy shared by every subpackage."""


class V2DropError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(V2DropError, ValueError):
    pass


class ConfigError(V2DropError, ValueError):
    pass


class ContractViolation(V2DropError, RuntimeError):
    """A hook or caller broke an interface contract (e.g. added or reordered tokens)."""


class StreamingIncompatibleError(V2DropError, RuntimeError):
    """Raised when a policy needs attention weights but the run uses streaming attention."""

    def __init__(self, policy: str = "attention_guided"):
        super().__init__(
            f"policy incompatible with streaming attention: {policy!r} needs explicit "
            "attention weights, which the streaming path never materializes"
        )
        self.policy = policy


class ModelFormatError(V2DropError):
    """Base class for weight-file problems."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedPayloadError(ModelFormatError):
    pass


class EmptyModelError(ModelFormatError):
    pass


class InconsistentModelError(ModelFormatError):
    """Tensor names or shapes do not agree with the config sidecar."""
