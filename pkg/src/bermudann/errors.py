"""Exception types shared across the package."""


class BermudannError(Exception):
    """Base class for package errors."""


class InvalidParameterError(BermudannError):
    """Model or market parameters fail validation (non-finite, wrong sign)."""


class InvalidScheduleError(BermudannError):
    """A payment or volatility schedule is empty or not strictly increasing."""


class InvalidMaturityError(BermudannError):
    """Bond maturity earlier than the valuation time."""


class InvalidTimeError(BermudannError):
    """Valuation time outside the instrument's validity window."""


class OutOfScheduleError(BermudannError):
    """Time beyond the end of the volatility schedule."""


class DegenerateVarianceError(BermudannError):
    """Zero integrated variance between valuation and expiry; no lognormal-style
    smoothing is possible and the caller should fall back to intrinsic value."""


class RootNotFoundError(BermudannError):
    """Break-even root bracketing failed after geometric widening."""


class CascadeOrderError(BermudannError):
    """Backward models requested out of the mandatory descending-date order."""


class InvalidBundleError(BermudannError):
    """Paths in a sampled-payoff bundle do not share one scenario."""


class IncompatibleFilesError(BermudannError):
    """Bundle and validation file manifests disagree."""


class ConfigError(BermudannError):
    """Run configuration is malformed or inconsistent."""


class NumericAbortError(BermudannError):
    """Training or pricing hit a non-finite quantity; carries diagnostics."""


class ChecksumError(BermudannError):
    """Serialized artifact failed its content checksum."""
