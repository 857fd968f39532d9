"""Exception taxonomy shared across the package."""


class DualrecError(Exception):
    """Base class for every package-specific failure."""


class ShapeError(DualrecError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ConfigError(DualrecError, ValueError):
    """A configuration value is out of range or inconsistent."""


class IngestionError(DualrecError, ValueError):
    """An input file is unreadable or too corrupted to trust."""


class VocabularyError(DualrecError, LookupError):
    """An id is missing from the vocabulary an artifact was built with."""


class UndefinedMetricError(DualrecError, ValueError):
    """A metric has no defined value on the given input."""


class TrainingDivergedError(DualrecError, RuntimeError):
    """Training produced a non-finite loss and was aborted."""
