"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`KDSTRError`,
so callers (the CLI in particular) can separate configuration mistakes from
data problems.
"""

from __future__ import annotations


class KDSTRError(Exception):
    """Base class for all package errors."""


class ConfigError(KDSTRError, ValueError):
    """Invalid user-supplied configuration."""


class DataError(KDSTRError, ValueError):
    """Input data violates a precondition."""


class ParseError(DataError):
    pass


class DuplicateInstance(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DegenerateGeometry(DataError):
    pass


class DisconnectedSensorSet(DataError):
    pass


class MissingOutline(DataError):
    pass


class OutOfRange(KDSTRError, ValueError):
    pass


class LevelMismatch(KDSTRError, ValueError):
    pass


class ComplexityExceedsData(KDSTRError, ValueError):
    pass


class OutsideModelDomain(KDSTRError, ValueError):
    pass


class KeyMismatch(DataError):
    pass


class ZeroValueInData(DataError):
    pass


class UnassignedInstance(DataError):
    pass


class OutsideAllRegions(KDSTRError, LookupError):
    pass


class TechniqueCannotImpute(KDSTRError, TypeError):
    pass


class VersionMismatch(DataError):
    pass


class CorruptPayload(DataError):
    pass
