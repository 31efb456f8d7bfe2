"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An optimizer, parameter space or config file violates its invariants."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(ValueError):
    """An objective was evaluated outside the box it is defined on."""


class BudgetExhausted(RuntimeError):
    """The next generation would overrun the evaluation budget.

    Raised before any evaluation of the generation is spent, so ``spent`` is
    the number of evaluations consumed by the aborted partial generation
    (always 0 for the built-in engine, kept for evaluators that charge
    up front).
    """

    def __init__(self, needed, remaining, spent=0):
        super().__init__(
            f"generation needs {needed} evaluations, only {remaining} remain"
        )
        self.needed = needed
        self.remaining = remaining
        self.spent = spent


class EvaluationError(RuntimeError):
    """An objective evaluation failed.

    ``transient`` marks failures that may succeed when retried once (timeouts,
    FAULT replies); fatal ones (dead process, protocol violation) are not.
    """

    def __init__(self, message, transient=False):
        super().__init__(message)
        self.transient = transient


class EvaluationTimeout(EvaluationError):
    def __init__(self, message):
        super().__init__(message, transient=True)


class ProtocolError(EvaluationError):
    """A line on the evaluator wire could not be understood."""

    def __init__(self, message, line=None):
        super().__init__(message, transient=False)
        self.line = line


class EncodingError(ValueError):
    """A request cannot be written on the wire (empty or non-finite vector)."""
