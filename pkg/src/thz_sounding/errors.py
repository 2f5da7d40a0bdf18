"""Exception hierarchy for the sounding pipeline."""


class SoundingError(ValueError):
    """Base class for every error raised by thz_sounding."""


class AxisMismatchError(SoundingError):
    """Frequency axes, angle grids or delay axes that must agree do not."""


class CalibrationError(SoundingError):
    """Calibration trace cannot be divided out (zero samples)."""


class GatingError(SoundingError):
    """Gating requested on a profile without a noise floor."""


class UnusableLinkError(SoundingError):
    """All signal power was gated away, or no bin rises above the noise."""


class InsufficientDataError(SoundingError):
    """Too few points for a fit or an estimate."""


class DegenerateFitError(SoundingError):
    """Regression design is singular (e.g. every distance identical)."""


class ModelTableError(SoundingError):
    """Model table document is malformed or incomplete."""


class SweepFormatError(SoundingError):
    """Binary sweep file cannot be decoded."""


class ManifestError(SoundingError):
    """Dataset manifest, run config or scene document is invalid."""
