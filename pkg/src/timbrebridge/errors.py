"""Exception hierarchy shared by all modules."""


class TimbrebridgeError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(TimbrebridgeError):
    """A caller broke an operation's precondition (shape mismatch, bad index)."""


class ConfigurationError(TimbrebridgeError):
    """Invalid or inconsistent configuration values."""


class DataError(TimbrebridgeError):
    """Malformed input data (non-finite entries, too-short waveform, empty set)."""


class DomainError(TimbrebridgeError):
    """A quantity was requested outside its mathematical domain (e.g. sigma=0)."""


class DivergenceError(TimbrebridgeError):
    """Non-finite state encountered during solving or training.

    Carries ``step_index`` naming the offending step when known.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index
