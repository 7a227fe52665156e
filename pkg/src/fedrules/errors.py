"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures to a
category without string matching.
"""


class FedRulesError(Exception):
    exit_code = 1


class InvalidArgumentError(FedRulesError, ValueError):
    exit_code = 2


class ConflictError(FedRulesError):
    """Raised when AND-combining rules whose literals share a feature group."""

    exit_code = 2


class NumericError(FedRulesError, ArithmeticError):
    exit_code = 4


class GenerationError(FedRulesError):
    exit_code = 5


class ConfigError(InvalidArgumentError):
    exit_code = 2


class DataIOError(FedRulesError, OSError):
    exit_code = 3
