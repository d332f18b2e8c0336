class SynthAuditError(Exception):
    """Base class for all errors raised by synthaudit."""


class DataError(SynthAuditError, ValueError):
    """Input data or arguments violate a documented precondition."""


class SchemaMismatchError(DataError):
    """Two datasets (or a model and a dataset) disagree on their columns."""


class ModelError(SynthAuditError, RuntimeError):
    """A model cannot be trained or evaluated in the requested way."""
