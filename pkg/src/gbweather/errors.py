"""Exception hierarchy shared across the pipeline."""


class WeatherError(Exception):
    """Base class for all pipeline errors."""


class LoadError(WeatherError):
    """A sequence file is missing, unreadable, or inconsistent.

    The message always names the offending path and channel.
    """


class ConfigError(WeatherError):
    """A config document or camera model violates its schema."""


class CalibrationError(WeatherError):
    """Metric calibration cannot proceed (too few points, degenerate data)."""
