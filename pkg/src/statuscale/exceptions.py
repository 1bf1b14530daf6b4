"""Exception types raised across the package."""


class StatuScaleError(Exception):
    """Base class for every error raised by this package."""


# trace
class EmptyTrace(StatuScaleError):
    pass


class SchemaMismatch(StatuScaleError):
    pass


class BurstOutOfRange(StatuScaleError):
    pass


class InsufficientData(StatuScaleError):
    pass


# detector
class DegenerateAbscissa(StatuScaleError):
    pass


class ZeroMeanWindow(StatuScaleError):
    pass


class DetectorColdStart(StatuScaleError):
    pass


# predictor
class FeatureShapeMismatch(StatuScaleError):
    pass


# vertical
class MeasurementInvalid(StatuScaleError):
    pass


class TunerDiverged(StatuScaleError, RuntimeWarning):
    """Emitted as a warning when a tuner update is skipped."""


class ProfileSaturated(StatuScaleError):
    pass


# metrics
class SeriesLengthMismatch(StatuScaleError):
    pass


class ConstantSeries(StatuScaleError):
    pass


class ConstraintViolated(StatuScaleError):
    pass


# cli / config
class ConfigError(StatuScaleError):
    """Invalid run configuration; carries an optional 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        if self.line is not None:
            return f"line {self.line}: {msg}"
        return msg


class BudgetEqualizationFailed(StatuScaleError):
    pass
