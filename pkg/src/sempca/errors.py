"""Exception hierarchy shared across the pipeline."""


class SemPCAError(Exception):
    """Base class for all library errors."""


class DataError(SemPCAError):
    """Input data violates a precondition (bad file, missing field, ...)."""


class NoMatch(DataError):
    pass


class MissingKey(DataError):
    pass


class MissingTimestamp(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class ThresholdUnset(SemPCAError):
    pass


class DegenerateResidual(SemPCAError):
    pass


class EmptyTraining(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewSequences(DataError):
    pass


class SampleTooSmall(DataError):
    pass


class TargetsUnreachable(SemPCAError):
    pass


class MissingArtifact(DataError):
    def __init__(self, path, stage):
        super().__init__(f"missing artifact {path}; run the '{stage}' subcommand first")
        self.path = path
        self.stage = stage


class DegenerateDataWarning(UserWarning):
    """All training vectors are identical; the fitted subspace is arbitrary."""
