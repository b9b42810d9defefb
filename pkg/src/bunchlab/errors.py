"""Exception classes shared across the package."""


class BunchlabError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigurationError(BunchlabError, ValueError):
    """A route/demand/experiment configuration violates an invariant."""


class ProtocolError(BunchlabError, RuntimeError):
    """An operation was called out of its required lifecycle order."""


class StateError(BunchlabError, RuntimeError):
    """An operation was applied to an object in an unsuitable state."""


class DataError(BunchlabError, ValueError):
    """Logs or records are internally inconsistent."""


class UndefinedStatisticError(BunchlabError, ValueError):
    """A statistic was requested on too little data to be defined."""


class CheckpointFormatError(BunchlabError, ValueError):
    """A checkpoint file is unreadable, truncated, or of the wrong kind."""
