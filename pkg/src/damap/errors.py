"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or configuration file violates its documented range."""


class NumericAbortError(RuntimeError):
    """An optimization run produced a non-finite cost and cannot continue.

    Carries an optional ``diagnostics`` dict describing the state at abort.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
