"""Exception hierarchy for data-handling and estimation failures."""


class SstmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SstmError, ValueError):
    """An argument violates a documented precondition."""


class SchemaError(SstmError, ValueError):
    """A cohort file violates the CSV schema; the message names row and rule."""


class DegenerateDataError(SstmError):
    """The data cannot identify the requested quantity (e.g. all labels equal)."""


class CalibrationError(SstmError):
    """Censoring-scale calibration could not bracket the target event rate."""


class ConvergenceError(SstmError):
    """Estimating equations were not solved to tolerance.

    Carries the last iterate so callers can inspect or restart.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class DegeneratePairsError(SstmError):
    """No comparable pairs: the pair-weight denominator is zero."""


class IpcwSingularityError(SstmError):
    """A contributing pair has (near-)zero estimated censoring survival."""


class DegenerateSupportError(SstmError):
    """Thresholding removed every coordinate; combination needs at least one."""


class AllZeroError(SstmError):
    """Soft-thresholding shrank every coordinate to zero."""


class GridRangeError(SstmError):
    """Requested evaluation point lies outside the fitted grid."""
