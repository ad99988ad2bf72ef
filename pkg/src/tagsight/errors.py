"""Exception taxonomy shared across the pipeline.

Two broad families matter to callers (and to the CLI exit codes):
``ValidationError`` for bad arguments or malformed single values, and
``DataError`` for problems with input files or datasets as a whole.
``TagSkipped`` is a control-flow signal, not a failure.
"""


class TagsightError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TagsightError):
    """An argument or value violates a documented precondition."""


class DataError(TagsightError):
    """An input file or dataset is unusable (mismatch, corruption, absence)."""


class RejectedTagError(ValidationError):
    """A raw tag normalizes to the empty string."""


class DegenerateLabelsError(ValidationError):
    """A training set contains only one class."""


class UndefinedMetricError(ValidationError):
    """A metric is undefined for the given inputs (e.g. one-class labels)."""


class ConfigurationError(ValidationError):
    """A configuration value references something that does not exist."""


class InsufficientDataError(DataError):
    """Not enough examples to carry out the requested procedure."""


class MissingDataError(DataError):
    """A required data component (e.g. the posterior matrix) is absent."""


class EmptyReportError(DataError):
    """An analysis produced no evaluable items at all."""


class TagSkipped(TagsightError):
    """Signal that a tag cannot be evaluated; carries the reason."""

    def __init__(self, tag: str, reason: str):
        super().__init__(f"{tag}: {reason}")
        self.tag = tag
        self.reason = reason
