"""Exception types shared across the package."""


class HKLabError(Exception):
    pass


class DomainError(HKLabError, ValueError):
    """Argument outside the domain of definition."""


class RangeError(HKLabError, ValueError):
    """Integration range or lift length outside the admissible range."""


class UsageError(HKLabError, ValueError):
    """Operation called on a model it does not apply to."""


class PreconditionError(HKLabError, ValueError):
    pass


class InfeasibleError(HKLabError, ValueError):
    pass


class ConfigError(HKLabError, ValueError):
    pass


class NumericError(HKLabError, ArithmeticError):
    """Quadrature or iteration failed to converge.

    ``diagnostics`` holds whatever the failing routine knew at the time.
    """

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = dict(diagnostics or {})
