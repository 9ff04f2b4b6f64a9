"""Exception hierarchy shared across the toolkit."""


class CallkitError(Exception):
    """Base class for all toolkit errors."""


class ConlluParseError(CallkitError):
    """Malformed CoNLL-U input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class StructuralError(CallkitError):
    """Document violates a structural invariant (dangling head, bad span)."""


class ReconstructionError(CallkitError):
    """Surfaces joined with whitespace flags disagree with the text sidecar."""


class AlignmentError(CallkitError):
    """Subword tokens cannot be reconciled with the source word."""


class MarkupError(CallkitError):
    """Judge-annotation markup is unbalanced or nested. Carries byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset


class ConfigurationError(CallkitError):
    """A method was asked to run without its required inputs."""


class NumericError(CallkitError):
    """A numerically undefined quantity was requested (underflow, empty mean)."""


class RetrievalError(CallkitError):
    """No partner candidate could be mapped into the base vocabulary."""


class PartnerError(CallkitError):
    """The partner adapter failed to produce a usable response."""


class VerdictParseError(CallkitError):
    """The judge response could not be parsed into a binary verdict."""
