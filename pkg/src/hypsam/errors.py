"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for configuration problems, 3 for data problems, 4 for backend problems.
"""


class HypsamError(Exception):
    exit_code = 1


class ConfigInvalid(HypsamError):
    exit_code = 2


class CheckpointIncompatible(ConfigInvalid):
    pass


class DataError(HypsamError):
    exit_code = 3


class MissingFile(DataError):
    pass


class DatasetMissing(DataError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class CorruptImage(DataError):
    pass


class NameMismatch(DataError):
    def __init__(self, missing_preds=(), missing_gts=()):
        self.missing_preds = sorted(missing_preds)
        self.missing_gts = sorted(missing_gts)
        parts = []
        if self.missing_preds:
            parts.append("no prediction for: " + ", ".join(self.missing_preds))
        if self.missing_gts:
            parts.append("no ground truth for: " + ", ".join(self.missing_gts))
        super().__init__("; ".join(parts) or "name mismatch")


class EmptyDataset(DataError):
    pass


class MalformedReport(DataError):
    pass


class EmptyPrompt(HypsamError):
    """No foreground component survived binarization and area filtering."""


class UnknownStrategy(ConfigInvalid, ValueError):
    pass


class BackendError(HypsamError):
    exit_code = 4


class BackendUnavailable(BackendError):
    pass


class BackboneWeightsMissing(BackendError):
    pass


class ScorerUnavailable(BackendError):
    pass


class PromptRejected(BackendError):
    pass


class ResourceError(HypsamError):
    exit_code = 5
