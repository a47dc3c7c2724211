"""Exception hierarchy. CLI exit codes are attached to the base classes."""


class HybridSearchError(Exception):
    exit_code = 3


class ConfigError(HybridSearchError):
    exit_code = 1


class DataError(HybridSearchError):
    exit_code = 2


class CorpusError(DataError):
    pass


class FormatError(DataError):
    """Unreadable, truncated or wrong-version artifact file."""


class FingerprintError(DataError):
    """Model, vocabulary and index were not built together."""


class InvariantError(HybridSearchError):
    exit_code = 3
