class SVFTError(Exception):
    """Base class for every error raised by this repository."""


class ShapeError(SVFTError, ValueError):
    pass


class NonFiniteError(SVFTError, ValueError):
    pass


class MatrixFormatError(SVFTError, ValueError):
    pass


class ConvergenceError(SVFTError, ArithmeticError):
    def __init__(self, residual: float, sweeps: int):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(f"Jacobi SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")


class BudgetError(SVFTError, ValueError):
    pass


class PatternError(SVFTError, ValueError):
    pass


class UnsupportedShapeError(SVFTError, ValueError):
    pass


class RankError(SVFTError, ValueError):
    pass


class SpectrumDegeneracyError(SVFTError, ValueError):
    pass


class ZeroColumnError(SVFTError, ValueError):
    pass


class UnknownMethodError(SVFTError, ValueError):
    pass


class ConfigError(SVFTError, ValueError):
    pass


class DivergenceError(SVFTError, RuntimeError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step} (loss {loss!r})")


class AdapterFormatError(SVFTError):
    pass


class ChecksumMismatchError(AdapterFormatError):
    pass


class UnsupportedVersionError(AdapterFormatError):
    pass
