"""Exception hierarchy shared by every pipeline stage."""


class AppsPredError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatchError(AppsPredError):
    """CSV header does not cover the schema's features or the label column."""


class DomainViolationError(AppsPredError):
    """A non-missing cell holds a value outside its feature's declared domain."""

    def __init__(self, row, feature, value):
        self.row = row
        self.feature = feature
        self.value = value
        super().__init__(
            f"row {row}: value {value!r} is not in the domain of feature {feature!r}"
        )


class EmptyDatasetError(AppsPredError):
    """No usable records remain (e.g. after removing missing data)."""


class UndefinedImpurityError(AppsPredError):
    """Impurity requested for a node holding no examples."""


class InconsistentSplitError(AppsPredError):
    """Child class counts do not add up to the parent counts."""


class EmptyNodeError(AppsPredError):
    """Tree growth requested on an empty row set."""


class ConfigError(AppsPredError):
    """Invalid hyperparameter or cross-validation configuration."""


class DegenerateTrainingError(AppsPredError):
    """Training data cannot support the requested model (e.g. one class)."""


class TrainingError(AppsPredError):
    """A model could not be trained on the supplied data."""


class DivergenceError(TrainingError):
    """Gradient training produced a non-finite objective."""

    def __init__(self, epoch, model="model"):
        self.epoch = epoch
        super().__init__(f"{model} diverged: non-finite loss at epoch {epoch}")


class InputError(AppsPredError):
    """Malformed metric inputs (length mismatch, out-of-range codes, empty)."""


class NoAUCError(AppsPredError):
    """AUC is undefined for every class of the evaluated set."""


class FoldError(AppsPredError):
    """Wraps an error raised while training or scoring one CV fold."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {cause}")
