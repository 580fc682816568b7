"""Exception hierarchy shared by the simulator, analytics and CLI."""


class QmuxError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(QmuxError, ValueError):
    """Invalid parameters, layouts or experiment configuration."""


class LayoutError(ConfigurationError):
    """Unknown, duplicated or wrongly-typed qubit labels."""


class PreconditionError(QmuxError, ValueError):
    """An operation was called on a state that violates its precondition."""


class InvariantViolation(QmuxError, ArithmeticError):
    """A physical invariant (trace, hermiticity, positivity, rate sign) broke."""
