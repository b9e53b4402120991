"""Exception hierarchy for vrslice.

Every failure mode that callers are expected to handle gets its own class;
all inherit from :class:`VrsliceError` so ``except VrsliceError`` catches
any library-level failure.
"""


class VrsliceError(Exception):
    """Base class for all vrslice errors."""


# --- trace ingestion / generation ---

class MalformedRowError(VrsliceError):
    """A trace CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyTraceError(VrsliceError):
    """Trace file or sequence contains no frames."""


class WindowTooLargeError(VrsliceError):
    """Moving-average window exceeds the trace length."""


class UnstableProcessError(VrsliceError):
    """AR coefficients describe a non-stationary process."""


# --- descriptive statistics ---

class EmptyDistributionError(VrsliceError):
    """Quantile requested from an empty sample set."""


class ConstantSeriesError(VrsliceError):
    """Autocorrelation of a constant series is undefined."""


class LagTooLargeError(VrsliceError):
    """Requested lag is not smaller than the series length."""


# --- regression ---

class OutOfRangeError(VrsliceError):
    """Frame index outside the trace."""


class TraceTooShortError(VrsliceError):
    """Trace shorter than the minimum needed for the requested design."""


class RankDeficientError(VrsliceError):
    """Design matrix is not full column rank; carries a condition estimate."""

    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (condition estimate {cond:.3e})")
        self.cond = cond


class NoConvergenceError(VrsliceError):
    """Iterative solver hit its iteration cap; carries the final step gap."""

    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (final relative step {gap:.3e})")
        self.gap = gap


class HistoryLengthError(VrsliceError):
    """Prediction history does not match the model's memory length."""


class ScopeMismatchError(VrsliceError):
    """Trace collection incompatible with the requested training scope."""


# --- residual / mixture modeling ---

class DegenerateSampleError(VrsliceError):
    """All samples equal; scale parameter would be zero."""


class IllConditionedMixtureError(VrsliceError):
    """Near-equal mixture scales that the clustering tolerance did not merge."""


# --- slicing / simulation ---

class InfeasibleBudgetError(VrsliceError):
    """Latency budget leaves no time for the downlink transmission."""


class PredictorMissingError(VrsliceError):
    """Simulation scenario requires a predictor that was not fitted."""


class TraceExhaustedError(VrsliceError):
    """Trace too short for the requested simulation duration and offset."""
