"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid configuration or mismatched dimensions/arguments."""


class DatasetNotFoundError(FileNotFoundError):
    """A required dataset file is missing."""


class IdxFormatError(ValueError):
    """An IDX file is malformed (bad magic, truncated payload, ...)."""
