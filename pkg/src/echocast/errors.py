"""Exception types raised across the package.

Every contract violation detectable at a module boundary raises one of
these, so callers can catch a single family (`EchocastError`) or a
specific condition.
"""


class EchocastError(Exception):
    """Base class for all package-specific errors."""


class DegenerateReservoir(EchocastError):
    """Reservoir matrix has (numerically) zero spectral radius; scaling is undefined."""


class DimensionMismatch(EchocastError):
    """Vector/matrix dimensions inconsistent with the weight matrices."""


class NonFiniteState(EchocastError):
    """Hidden-state evolution produced an overflow or NaN."""


class SingularSystem(EchocastError):
    """Unpenalized readout system is rank-deficient."""


class InsufficientHistory(EchocastError):
    """Training series too short for the requested embedding/washout."""


class NonFiniteForecast(EchocastError):
    """A forecast trajectory diverged to non-finite values."""


class EmptyGrid(EchocastError):
    """Hyper-parameter grid contains no candidates."""


class ShapeMismatch(EchocastError):
    """Score inputs have incompatible shapes."""


class EmptyEnsemble(EchocastError):
    """Ensemble scoring requires at least one member."""


class InsufficientData(EchocastError):
    """Series shorter than the calibration layout requires."""


class TooFewWindows(EchocastError):
    """Residual standard deviations need at least two windows."""


class ZeroSigma(EchocastError):
    """Standardization received a non-positive standard deviation."""


class BadLevel(EchocastError):
    """Interval level outside (0, 1)."""


class ZeroVariance(EchocastError):
    """Correlation undefined for a zero-variance column."""


class InsufficientLocalData(EchocastError):
    """Too few stations to fit a local range."""


class SingularKrigingSystem(EchocastError):
    """Station correlation matrix not invertible."""


class EmptyDistrict(EchocastError):
    """A district polygon contains no grid point."""


class BadThreshold(EchocastError):
    """Exposure threshold must be positive on the concentration scale."""


class NonStationaryFit(EchocastError):
    """No candidate model satisfied the stationarity constraint."""


class OptimizerFailed(EchocastError):
    """Numerical optimizer failed to produce a usable estimate."""


class ConfigError(EchocastError):
    """Run configuration file is missing, malformed, or inconsistent."""


class MissingInput(EchocastError):
    """A pipeline stage input file does not exist."""
