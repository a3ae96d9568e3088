"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: config/usage problems exit 1,
data problems exit 2, numerical failures exit 3.
"""


class CfkitError(Exception):
    """Base class for all package errors."""


class ConfigError(CfkitError):
    """Invalid configuration, flag combination, or config file."""


class DataError(CfkitError):
    """Malformed input data: CSV parsing, labels, folds, degenerate features."""


class SchemaMismatchError(DataError):
    """Persisted model does not match the dataset it is applied to."""


class DimensionError(CfkitError):
    """Operand shapes do not conform to an operation's contract."""


class NumericError(CfkitError):
    """Non-finite values or optimization divergence.

    When raised from an optimization loop, ``iteration`` and
    ``last_finite_loss`` describe where the run broke down.
    """

    def __init__(self, message, iteration=None, last_finite_loss=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_finite_loss = last_finite_loss


class DecompositionError(NumericError):
    """Cholesky factorization failed: input not symmetric positive definite."""
