from builtins import RuntimeError, ValueError


class IcsError(Exception):
    """Base class for every error raised by the simulator and learning suite."""


class ConfigurationError(IcsError, ValueError):
    """Raised when a configuration value or file cannot be accepted."""


class DomainError(IcsError, ValueError):
    """Raised when an argument lies outside an operation's domain."""


class ContractViolation(IcsError, ValueError):
    """Raised when a caller breaks a structural contract (shapes, sizes, architectures)."""


class TrainingError(IcsError, RuntimeError):
    """Raised when optimisation produces a non-finite loss or gradient."""
