"""Exception types shared across the package."""


class LaiError(Exception):
    """Base class for every error raised by lailoss."""


class ConfigError(LaiError, ValueError):
    pass


class DimensionError(LaiError, ValueError):
    pass


class NonFiniteValue(LaiError, ArithmeticError):
    pass


class UnsupportedDepth(LaiError):
    pass


class EmptyBatch(LaiError, ValueError):
    pass


class ParseError(LaiError, ValueError):
    pass


class DivergenceError(LaiError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class IoError(LaiError, OSError):
    pass
