"""Exception hierarchy shared by every module of the package."""


class InfoBottleneckError(Exception):
    """Base class for all errors raised by this package."""


class InsufficientData(InfoBottleneckError, ValueError):
    pass


class TrainingDiverged(InfoBottleneckError, FloatingPointError):
    def __init__(self, epoch, message="loss became non-finite"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")


class SplitTooSmall(InfoBottleneckError, ValueError):
    pass


class CorruptDataset(InfoBottleneckError, IOError):
    pass


class UnsupportedVersion(InfoBottleneckError, ValueError):
    pass


class WidthExceedsInput(InfoBottleneckError, ValueError):
    pass


class AlignmentError(InfoBottleneckError, ValueError):
    pass


class ShapeError(InfoBottleneckError, ValueError):
    pass


class NotFitted(InfoBottleneckError, RuntimeError):
    pass


class ConfigError(InfoBottleneckError, ValueError):
    pass


class UndefinedCorrelation(InfoBottleneckError, ValueError):
    pass


class UndefinedSimilarity(InfoBottleneckError, ValueError):
    pass


class UndefinedWER(InfoBottleneckError, ValueError):
    pass


class MissingRun(InfoBottleneckError, FileNotFoundError):
    pass


class RefusesToMix(InfoBottleneckError, RuntimeError):
    pass


class ParseError(InfoBottleneckError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
