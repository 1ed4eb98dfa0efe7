"""Exception taxonomy shared across the package."""


class AllabError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(AllabError, ValueError):
    """An argument violates a documented precondition."""


class InvalidDistributionError(InvalidParameterError):
    """A probability matrix is not row-stochastic or has negative entries."""


class TooFewSamplesError(InvalidParameterError):
    """An estimator needs more stochastic passes than were provided."""


class OddBatchError(InvalidParameterError):
    """Pairwise ranking loss requires an even number of elements."""


class BudgetExceedsPoolError(InvalidParameterError):
    """Requested more selections than there are unlabeled samples."""


class PoolExhaustedError(AllabError, RuntimeError):
    """An AL cycle needs more unlabeled samples than remain."""


class InstanceTooLargeError(InvalidParameterError):
    """Exhaustive oracle was asked to enumerate too large an instance."""


class NonFiniteLossError(AllabError, ArithmeticError):
    """Training loss became NaN or infinite (divergence)."""


class LossHeadMissingError(AllabError, RuntimeError):
    """Loss-prediction output requested from a model built without the head."""


class ParseError(AllabError, ValueError):
    """A file failed to parse; message carries path and position."""


class LabelOutOfRangeError(ParseError):
    """A label in an input file falls outside the declared class range."""


class ValidationError(AllabError, ValueError):
    """A configuration value (or combination) is invalid; names the field."""


class ConfigMismatchError(ValidationError):
    """Configs meant to differ only by strategy differ elsewhere."""


class InfeasibleBudgetError(ValidationError):
    """A budget sweep cannot match the total label budget."""


class MissingResultsError(AllabError, RuntimeError):
    """Requested results (cycle, file) do not exist in the output directory."""
