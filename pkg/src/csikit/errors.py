"""Exception types raised by csikit."""


class CsiError(Exception):
    """Base class for all csikit errors."""


class InvalidParameterError(CsiError, ValueError):
    pass


class DimensionError(CsiError, ValueError):
    pass


class RankDeficiencyError(CsiError, ArithmeticError):
    pass


class BudgetExceededError(CsiError, RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""


class ConfigError(CsiError, ValueError):
    """Experiment configuration failed validation.

    ``problems`` holds one human-readable line per offending field.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid experiment config:\n  " + "\n  ".join(self.problems))
