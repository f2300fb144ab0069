"""Exception hierarchy.

Three base classes map onto CLI exit codes: configuration problems (2),
data problems (3) and numerical failures (4).
"""


class GhiError(Exception):
    exit_code = 1


class ConfigError(GhiError):
    exit_code = 2


class DataError(GhiError, ValueError):
    exit_code = 3


class NumericalError(GhiError, ArithmeticError):
    exit_code = 4


# ingestion
class MissingColumn(DataError):
    pass


class NonMonotoneTimestamps(DataError):
    pass


class GapTooLarge(DataError):
    pass


class EmptyFile(DataError):
    pass


class IncompleteYears(DataError):
    pass


# regression
class ExogenousMissing(DataError):
    pass


class TooFewObservations(DataError):
    pass


class RankDeficient(NumericalError):
    pass


class DegenerateDesign(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


# extremes
class TooFewExceedances(DataError):
    pass


class NonConvergence(NumericalError):
    pass


class PositiveShapeEndpointRequested(NumericalError):
    pass


class ShapeNotNegative(NumericalError):
    pass


class LogitDomain(DataError):
    pass


# marginals / copulas
class BoundaryMass(NumericalError):
    pass


class DomainError(DataError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class TailOutOfRange(DataError):
    pass


class BoundaryParameter(UserWarning):
    """Warning: a fitted copula parameter sits at the edge of its domain."""


# scenarios / scoring / baselines
class TotalExceedsEnvelope(DataError):
    pass


class HorizonMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LinkDomain(DataError):
    pass


class NonStationaryFit(NumericalError):
    pass


# artifacts / cli
class ArtifactVersionMismatch(ConfigError):
    pass


class SeedMissing(ConfigError):
    pass
