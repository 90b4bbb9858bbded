"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration document or parameter set failed validation."""


class DataError(ValueError):
    """Input data (frames, annotations) could not be read or is inconsistent."""


class LostTarget(RuntimeError):
    """The requested crop lies entirely outside the frame."""
