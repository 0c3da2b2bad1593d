"""Exception hierarchy shared by all modules."""


class ModrespError(Exception):
    """Base class for errors raised by modresp."""


class ConfigurationError(ModrespError, ValueError):
    """Invalid configuration value."""


class ArgumentError(ModrespError, ValueError):
    """Arguments violate an operation's precondition."""


class ClippingError(ArgumentError):
    """Audio samples outside [-1, 1]."""

    def __init__(self, index, value):
        super().__init__(f"sample {index} clips: {value!r} outside [-1, 1]")
        self.index = index
        self.value = value


class ExtractorFailure(ModrespError):
    """An external extractor exited with a nonzero status."""

    def __init__(self, command, returncode, stderr):
        super().__init__(f"{command!r} exited with status {returncode}: {stderr.strip()[-2000:]}")
        self.command = command
        self.returncode = returncode
        self.stderr = stderr


class TrackParseError(ModrespError):
    """Extractor output could not be parsed."""

    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class InsufficientDataError(ModrespError):
    """Too few voiced frames or periodic pairs to proceed."""


class AnalysisError(ModrespError):
    """The response analysis could not find usable periodic segments."""

    def __init__(self, message, sd_curve=None):
        super().__init__(message)
        self.sd_curve = sd_curve


class CalibrationError(ModrespError):
    """The calibration response is unusable."""


class MetricError(ModrespError):
    """A summary metric is undefined for the given response."""
