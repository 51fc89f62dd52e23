"""Exception types shared across the package.

Each class names one failure condition of the public API. They all derive
from :class:`LoadcastError` so callers (and the CLI) can catch everything
from this package with a single except clause.
"""


class LoadcastError(Exception):
    """Base class for all errors raised by loadcast."""


class MissingColumn(LoadcastError):
    def __init__(self, name: str):
        super().__init__(f"required column {name!r} missing from header")
        self.name = name


class UnparseableRow(LoadcastError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class NonHourlyGap(LoadcastError):
    def __init__(self, missing):
        super().__init__(f"series has a gap; first missing hour is {missing}")
        self.missing = missing


class DuplicateTimestamp(LoadcastError):
    def __init__(self, timestamp):
        super().__init__(f"duplicate timestamp {timestamp}")
        self.timestamp = timestamp


class SpecOutOfRange(LoadcastError):
    pass


class TooShort(LoadcastError):
    pass


class SeriesTooShort(LoadcastError):
    def __init__(self, max_lag: int, available: int):
        super().__init__(
            f"series of {available} hours cannot supply the {max_lag}-hour lag"
        )
        self.max_lag = max_lag
        self.available = available


class UnknownColumn(LoadcastError):
    def __init__(self, name: str):
        super().__init__(f"unknown column {name!r}")
        self.name = name


class LengthMismatch(LoadcastError):
    pass


class DuplicateColumn(LoadcastError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} already present")
        self.name = name


class EmptyMatrix(LoadcastError):
    pass


class InvalidQuantile(LoadcastError):
    def __init__(self, q):
        super().__init__(f"quantile level must lie in (0, 1), got {q}")
        self.q = q


class SchemaMismatch(LoadcastError):
    pass


class DegenerateTarget(LoadcastError):
    pass


class LevelNotForecast(LoadcastError):
    def __init__(self, level):
        super().__init__(f"level {level} is not among the forecast levels")
        self.level = level


class RangeOutOfSeries(LoadcastError):
    pass


class ConfigError(LoadcastError):
    """Invalid or unknown key in a run-configuration file."""
