"""Exception hierarchy shared by every ivrobust module."""


class IVRobustError(Exception):
    """Base class for all errors raised by ivrobust."""


class DataError(IVRobustError, ValueError):
    """Input data or model specification is unusable."""


class RankDeficiencyError(DataError):
    """A design matrix or cross-moment fails its rank condition."""


class NumericalError(IVRobustError, ArithmeticError):
    """A numerical stage broke down (singular matrix, non-convergence, ...)."""


class DegenerateInferenceError(NumericalError):
    """The variance of the estimator is identically zero, so studentizing is impossible."""


class SeparationError(NumericalError):
    """Perfect or quasi-perfect separation in the logit first stage."""
