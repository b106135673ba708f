"""Exception hierarchy shared by every ctxgnn module."""
from __future__ import annotations


class CtxGNNError(Exception):
    """Base class for all errors raised by the package."""


# Data / input problems -------------------------------------------------------


class DataError(CtxGNNError, ValueError):
    pass


class SchemaError(DataError):
    pass


class UnknownType(DataError):
    pass


class DanglingEdge(DataError):
    pass


class BadTimestamp(DataError):
    pass


class InvalidSeed(DataError):
    pass


class InvalidUser(DataError):
    pass


class UnknownItem(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class NoEligibleUsers(DataError):
    pass


class EmptyGroundTruth(DataError):
    pass


class InvalidConfig(DataError):
    pass


# Model / numerics ------------------------------------------------------------


class ModelError(CtxGNNError, RuntimeError):
    pass


class ShapeMismatch(ModelError):
    pass


class IndexOutOfRange(ModelError, IndexError):
    pass


class TargetOutOfRange(ModelError, IndexError):
    pass


class TargetMasked(ModelError):
    pass


class MissingEncoder(ModelError):
    pass


class DepthMismatch(ModelError):
    pass


class ClassBudgetTooSmall(ModelError):
    pass


class NumericalError(ModelError):
    pass


# Checkpoints -----------------------------------------------------------------


class CheckpointError(CtxGNNError, OSError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass
