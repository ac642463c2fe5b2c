"""Exception hierarchy.

Each family carries the process exit code used by the command line tool.
"""


class BerthlocError(Exception):
    exit_code = 1


class ConfigError(BerthlocError, ValueError):
    exit_code = 2


class EmptyDataError(BerthlocError):
    exit_code = 3


class NumericError(BerthlocError, ArithmeticError):
    exit_code = 4


class RecordRejected(BerthlocError, ValueError):
    """An AIS record violates a schema invariant.

    ``reason`` is one of ``BadLatitude``, ``BadLongitude``, ``BadHeading``,
    ``BadSpeed``, ``PartialDimensions``, ``NegativeDimension`` or ``BadMmsi``.
    """

    def __init__(self, reason, message=""):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason


class EmptyDatasetError(EmptyDataError):
    pass


class FewerThanTwoVesselsError(EmptyDataError):
    pass


class DegenerateSpreadError(NumericError):
    pass


class TooFewPointsError(NumericError):
    pass


class DegenerateFitError(NumericError):
    pass


class AllRerunsInfiniteError(NumericError):
    pass


class AllTrialsFailedError(NumericError):
    pass


class NoClustersError(EmptyDataError):
    pass


class MismatchedTransformsError(BerthlocError, ValueError):
    exit_code = 2


class SchemaVersionMismatch(BerthlocError):
    exit_code = 2


class FileUnreadableError(BerthlocError, OSError):
    exit_code = 2


class MissingTuningError(ConfigError):
    pass


class HeadingUnavailableError(BerthlocError, ValueError):
    pass


class InvalidSpecError(ConfigError):
    pass
