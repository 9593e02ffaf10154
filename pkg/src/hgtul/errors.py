"""Exception hierarchy.

Every pipeline stage raises its own error class so the CLI can map a failure
to a distinct exit code (see ``cli.exit_code_for``).
"""


class HgtulError(Exception):
    exit_code = 1


class DataError(HgtulError):
    """Check-in parsing, filtering, segmentation, splitting, balancing."""

    exit_code = 2


class FormatError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class BalanceError(DataError):
    pass


class EncodingError(HgtulError):
    """Geohash / time-feature / embedding-table problems."""

    exit_code = 3


class HypergraphError(HgtulError):
    exit_code = 4


class RelationalError(HgtulError):
    exit_code = 5


class SequenceError(HgtulError):
    exit_code = 6


class TrainingError(HgtulError):
    exit_code = 7


class CheckpointError(TrainingError):
    pass


class EvaluationError(HgtulError):
    exit_code = 8


class SynthError(HgtulError):
    exit_code = 9


class ConfigError(HgtulError):
    exit_code = 10
