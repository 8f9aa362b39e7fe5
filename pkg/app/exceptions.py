class MaskReconError(Exception):
    """Base error for the reconstruction toolkit."""
    exit_code = 1


class DimensionError(MaskReconError, ValueError):
    pass


class EmptySupportError(MaskReconError):
    """A projection has no sample above the support threshold."""

    def __init__(self, theta: float):
        super().__init__(f"empty support at angle {theta:.6f} rad (object invisible at this angle)")
        self.theta = theta


class DegeneratePeakError(MaskReconError):
    pass


class StepSizeError(MaskReconError):
    """Shrink loop ran past its cap, which means H and its adjoint disagree."""


class ConfigError(MaskReconError):
    exit_code = 3


class FileFormatError(MaskReconError):
    exit_code = 4


EXIT_CONVERGED = 0
EXIT_MAX_ITERS = 2
EXIT_CONFIG = ConfigError.exit_code
EXIT_IO = FileFormatError.exit_code
